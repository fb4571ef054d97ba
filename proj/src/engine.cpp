#include "gridwatch/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>

namespace gridwatch::engine {

using alerting::AlertType;
using automata::Direction;
using automata::Role;

namespace {

constexpr std::uint16_t kIec104Port = 2404;
constexpr std::uint16_t kSshPort = 22;
constexpr std::uint16_t kModbusPort = 502;

bool seq_before(std::uint32_t a, std::uint32_t b) { return static_cast<std::int32_t>(a - b) < 0; }
bool seq_at_or_before(std::uint32_t a, std::uint32_t b) { return static_cast<std::int32_t>(a - b) <= 0; }

gim::Protocol protocol_for_port(std::uint16_t port) {
    switch (port) {
    case kIec104Port: return gim::Protocol::IEC104;
    case kSshPort: return gim::Protocol::SSH;
    case kModbusPort: return gim::Protocol::MODBUS;
    default: return gim::Protocol::OTHER;
    }
}

std::string frame_info(const iec104::Frame& frame) {
    std::string info = "ETH / IP / TCP";
    if (const auto* apdu = frame.apdu()) {
        info += " / IEC104-";
        info += iec104::format_letter(apdu->apci.format);
    }
    return info;
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string format_ms(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

bool is_confirmation_cot(std::uint8_t cot) {
    return cot == iec104::cot::ActivationCon || cot == iec104::cot::DeactivationCon ||
           cot == iec104::cot::ActivationTerm || (cot >= 44 && cot <= 47);
}

bool is_command_cot(std::uint8_t cot) {
    return cot == iec104::cot::Activation || cot == iec104::cot::Deactivation;
}

AlertDraft make_draft(AlertType type, std::string reason, std::string info) {
    AlertDraft d;
    d.type = type;
    d.reason = std::move(reason);
    d.packet_info = std::move(info);
    return d;
}

// Which specification domain an alert type belongs to.
rules::Domain domain_of(AlertType t) {
    switch (t) {
    case AlertType::DATAPOINT_MISMATCH:
    case AlertType::TYPE_MISMATCH:
    case AlertType::INVALID_OPERATION: return rules::Domain::Asset;
    case AlertType::INVALID_SETPOINT: return rules::Domain::Operation;
    default: return rules::Domain::Communication;
    }
}

} // namespace

std::string to_string(const PacketCategory& c) {
    switch (c.kind) {
    case PacketCategory::Kind::IEC104: return "IEC104";
    case PacketCategory::Kind::OtherWhitelistedProtocol: return "OTHER_WHITELISTED_PROTOCOL(" + gim::to_string(c.protocol) + ")";
    case PacketCategory::Kind::Irrelevant: return "IRRELEVANT";
    case PacketCategory::Kind::Malformed: return "MALFORMED";
    }
    return "?";
}

// ---------------------------------------------------------------- RuleIndex

RuleIndex::RuleIndex(const rules::SpecificationBase& sb) : sb_(&sb) {
    for (const auto& e : sb.endpoints) {
        macs_.insert(e.mac);
        ip_to_node_.emplace(e.ip, e.node_id);
    }
    for (const auto& c : sb.channels) {
        channels_.emplace(std::make_tuple(c.client_ip, c.server_ip, c.server_port), &c);
        servers_.emplace(std::make_pair(c.server_ip, c.server_port), c.protocol);
        client_to_server_.emplace(c.client_ip, c.server_ip, c.server_port);
    }
    for (const auto& [key, rule] : sb.datapoints) common_addresses_.emplace(key.server_ip, key.common_address);
}

const std::string* RuleIndex::node_for(Ipv4Address ip) const {
    auto it = ip_to_node_.find(ip);
    return it == ip_to_node_.end() ? nullptr : &it->second;
}

bool RuleIndex::may(Ipv4Address ip, rules::Operation op) const {
    const std::string* node = node_for(ip);
    if (!node) return false;
    auto it = sb_->role_ops.find(*node);
    return it != sb_->role_ops.end() && it->second.count(op) != 0;
}

std::optional<RuleIndex::ChannelMatch> RuleIndex::match_channel(Ipv4Address src_ip, std::uint16_t src_port,
                                                                Ipv4Address dst_ip, std::uint16_t dst_port) const {
    if (auto it = channels_.find({src_ip, dst_ip, dst_port}); it != channels_.end())
        return ChannelMatch{it->second, true};
    if (auto it = channels_.find({dst_ip, src_ip, src_port}); it != channels_.end())
        return ChannelMatch{it->second, false};
    return std::nullopt;
}

bool RuleIndex::known_port(Ipv4Address ip, std::uint16_t port, Ipv4Address peer_ip, std::uint16_t peer_port) const {
    if (servers_.count({ip, port})) return true;
    return client_to_server_.count({ip, peer_ip, peer_port}) != 0;
}

std::optional<gim::Protocol> RuleIndex::server_protocol(Ipv4Address ip, std::uint16_t port) const {
    auto it = servers_.find({ip, port});
    if (it == servers_.end()) return std::nullopt;
    return it->second;
}

bool RuleIndex::known_common_address(Ipv4Address server_ip, std::uint16_t ca) const {
    return ca == 0xFFFF || common_addresses_.count({server_ip, ca}) != 0;
}

// -------------------------------------------------------- StreamReassembler

void StreamReassembler::on_syn(std::uint32_t seq) {
    initialised_ = true;
    next_seq_ = seq + 1;
    buffer_.clear();
    pending_.clear();
}

void StreamReassembler::append(std::uint32_t seq, ByteView payload) {
    // Trim bytes already delivered.
    if (seq_before(seq, next_seq_)) {
        const std::uint32_t overlap = next_seq_ - seq;
        if (overlap >= payload.size()) return;
        payload = payload.subspan(overlap);
    }
    buffer_.insert(buffer_.end(), payload.begin(), payload.end());
    next_seq_ += static_cast<std::uint32_t>(payload.size());
}

std::vector<iec104::Frame> StreamReassembler::push(std::uint32_t seq, ByteView payload) {
    std::vector<iec104::Frame> frames;
    if (payload.empty()) return frames;
    if (!initialised_) {
        initialised_ = true;
        next_seq_ = seq;
    }
    if (seq_before(next_seq_, seq)) {
        if (pending_.size() >= kMaxPendingSegments) {
            ++dropped_;
            return frames;
        }
        pending_.try_emplace(seq, Bytes(payload.begin(), payload.end()));
        return frames;
    }
    append(seq, payload);
    // Drain buffered segments that are now contiguous.
    for (auto it = pending_.begin(); it != pending_.end();) {
        if (seq_at_or_before(it->first, next_seq_)) {
            append(it->first, it->second);
            it = pending_.erase(it);
            it = pending_.begin();
        } else {
            ++it;
        }
    }
    extract(frames);
    return frames;
}

void StreamReassembler::extract(std::vector<iec104::Frame>& out) {
    std::size_t off = 0;
    while (off < buffer_.size()) {
        const std::size_t remaining = buffer_.size() - off;
        const auto base = static_cast<std::size_t>(stream_offset_ + off);
        if (buffer_[off] != iec104::kStartByte) {
            out.push_back(iec104::Frame{base, remaining, iec104::Malformed{"IEC104", base, "expected start byte 0x68"}});
            off = buffer_.size();
            break;
        }
        if (remaining < 2) break;
        const std::uint8_t length = buffer_[off + 1];
        if (length < iec104::kMinApduLength || length > iec104::kMaxApduLength) {
            out.push_back(iec104::Frame{base, remaining,
                                        iec104::Malformed{"IEC104", base + 1,
                                                          "APDU length " + std::to_string(length) + " outside [4, 253]"}});
            off = buffer_.size();
            break;
        }
        const std::size_t size = std::size_t{length} + 2;
        if (remaining < size) break;
        auto decoded = iec104::decode_apdu(ByteView(buffer_).subspan(off, size), base);
        iec104::Frame frame{base, size, {}};
        if (auto* a = std::get_if<iec104::Apdu>(&decoded))
            frame.content = std::move(*a);
        else
            frame.content = std::get<iec104::Malformed>(decoded);
        out.push_back(std::move(frame));
        off += size;
    }
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(off));
    stream_offset_ += off;
}

// --------------------------------------------------------------- RttTracker

void RttTracker::on_data(bool from_client, std::uint32_t end_seq, Timestamp ts) {
    auto& list = pending_[from_client ? 0 : 1];
    for (auto& e : list) {
        if (e.end_seq == end_seq) {
            e.retransmitted = true;  // Karn: no sample from retransmitted data
            return;
        }
    }
    list.push_back(Entry{end_seq, ts, false});
}

std::vector<double> RttTracker::on_ack(bool from_client, std::uint32_t ack, Timestamp ts) {
    std::vector<double> samples;
    // An ACK sent by the client covers data sent by the server and vice versa.
    for (int side = 0; side < 2; ++side) {
        auto& list = pending_[side];
        list.erase(std::remove_if(list.begin(), list.end(),
                                  [&](const Entry& e) { return ts.ns() - e.sent.ns() > kExpiryNs; }),
                   list.end());
    }
    auto& list = pending_[from_client ? 1 : 0];
    auto covered = [&](const Entry& e) { return seq_at_or_before(e.end_seq, ack); };
    for (const auto& e : list)
        if (covered(e) && !e.retransmitted) samples.push_back(ts.ms_since(e.sent));
    list.erase(std::remove_if(list.begin(), list.end(), covered), list.end());
    return samples;
}

// --------------------------------------------------------- ConnectionObject

ConnectionObject::ConnectionObject(ConnectionKey k, const rules::ChannelRule* rule, automata::State initial,
                                   bool synced)
    : key(k), channel_rule(rule), mtu_automaton(Role::MTU, initial), rtu_automaton(Role::RTU, initial) {
    mtu_counters.synced = synced;
    rtu_counters.synced = synced;
}

// ------------------------------------------------------------------- checks

std::vector<AlertDraft> check_datapoint(const iec104::Asdu& asdu, bool from_client, const ConnectionObject& conn,
                                        const RuleIndex& index) {
    std::vector<AlertDraft> out;
    if (!asdu.supported()) return out;
    const Ipv4Address server_ip = conn.key.server_ip;
    const Ipv4Address sender_ip = from_client ? conn.key.client_ip : conn.key.server_ip;
    const bool sender_controls = index.may(sender_ip, rules::Operation::SendControl);
    const bool sender_monitors = index.may(sender_ip, rules::Operation::SendMonitor);
    static const std::string kInvalidOperation = "Send packet contains invalid operation for the endpoint!";

    // Station-level commands carry IOA 0 and are addressed by common address only.
    if (iec104::is_system_command(asdu.type_id)) {
        if (!index.known_common_address(server_ip, asdu.common_address))
            out.push_back(make_draft(AlertType::DATAPOINT_MISMATCH,
                                     "Common address " + std::to_string(asdu.common_address) +
                                         " is not specified for endpoint " + server_ip.str(),
                                     {}));
        const bool allowed = (sender_controls && is_command_cot(asdu.cot)) ||
                             (sender_monitors && is_confirmation_cot(asdu.cot));
        if (!allowed) out.push_back(make_draft(AlertType::INVALID_OPERATION, kInvalidOperation, {}));
        return out;
    }

    for (const auto& obj : asdu.objects) {
        const rules::DatapointKey key{server_ip, asdu.common_address, obj.ioa};
        auto it = index.sb().datapoints.find(key);
        if (it == index.sb().datapoints.end()) {
            out.push_back(make_draft(AlertType::DATAPOINT_MISMATCH,
                                     "Data point is not specified for this endpoint: CA " +
                                         std::to_string(asdu.common_address) + " IOA " + std::to_string(obj.ioa),
                                     {}));
            continue;
        }
        const rules::DatapointRule& rule = it->second;
        if (rule.asdu_type != asdu.type_id)
            out.push_back(make_draft(AlertType::TYPE_MISMATCH,
                                     "ASDU type " + std::to_string(asdu.type_id) + " does not match specified type " +
                                         std::to_string(rule.asdu_type) + " for IOA " + std::to_string(obj.ioa),
                                     {}));
        bool allowed = false;
        if (iec104::is_monitor_type(asdu.type_id))
            allowed = sender_monitors && rule.direction == gim::Direction::Monitor;
        else if (iec104::is_control_type(asdu.type_id))
            allowed = rule.direction == gim::Direction::Control &&
                      ((sender_controls && is_command_cot(asdu.cot)) ||
                       (sender_monitors && is_confirmation_cot(asdu.cot)));
        if (!allowed) out.push_back(make_draft(AlertType::INVALID_OPERATION, kInvalidOperation, {}));
    }
    return out;
}

std::optional<AlertDraft> check_setpoint(const iec104::InformationObject& obj, const rules::DatapointRule& rule) {
    const float* value = std::get_if<float>(&obj.value);
    if (!value) return std::nullopt;
    const double v = *value;
    const bool below = rule.min_value && !(v >= *rule.min_value);
    const bool above = rule.max_value && !(v <= *rule.max_value);
    if (!std::isfinite(v) || below || above)
        return make_draft(AlertType::INVALID_SETPOINT, "Active control command contains invalid setpoint!", {});
    return std::nullopt;
}

std::optional<AlertDraft> check_rtt(ConnectionObject& conn, const PacketLayers& layers, bool from_client,
                                    Timestamp now, double max_rtt_ms, std::vector<double>* samples) {
    if (!layers.tcp) return std::nullopt;
    const TcpLayer& tcp = *layers.tcp;
    std::optional<double> worst;
    if (tcp.has(tcp_flag::ACK)) {
        for (double rtt : conn.rtt_tracker.on_ack(from_client, tcp.ack, now)) {
            if (samples) samples->push_back(rtt);
            if (rtt > max_rtt_ms && (!worst || rtt > *worst)) worst = rtt;
        }
    }
    if (!tcp.payload.empty())
        conn.rtt_tracker.on_data(from_client, tcp.seq + tcp.seq_length(), now);
    if (!worst) return std::nullopt;
    return make_draft(AlertType::RTT_EXCEEDED,
                      "Round trip time " + format_ms(*worst) + " ms exceeds maximum of " +
                          format_number(max_rtt_ms) + " ms",
                      layer_chain(layers));
}

std::optional<AlertDraft> check_protocol_window(gim::Protocol protocol, Timestamp ts,
                                                const rules::SpecificationBase& sb) {
    std::time_t t = static_cast<std::time_t>(ts.sec);
    std::tm tm{};
    gmtime_r(&t, &tm);
    // tm_wday: 0 = Sunday
    const auto weekday = static_cast<rules::Weekday>((tm.tm_wday + 6) % 7);
    const int minute = tm.tm_hour * 60 + tm.tm_min;
    bool any = false;
    for (const auto& w : sb.protocol_windows) {
        if (w.protocol != protocol) continue;
        any = true;
        if (w.weekdays.count(weekday) && minute >= w.start.minutes && minute < w.end.minutes) return std::nullopt;
    }
    if (!any)
        return make_draft(AlertType::PROTOCOL_NOT_ALLOWED,
                          "Protocol " + gim::to_string(protocol) + " is not allowed by the specification", {});
    return make_draft(AlertType::TIME_WINDOW_VIOLATION,
                      "Protocol " + gim::to_string(protocol) + " used outside its permitted time windows", {});
}

// ------------------------------------------------------------------- Engine

Engine::Engine(const rules::SpecificationBase& sb, EngineOptions options)
    : sb_(sb), index_(sb_), options_(options) {}

const ConnectionObject* Engine::connection(const ConnectionKey& key) const {
    auto it = table_.find(key);
    return it == table_.end() ? nullptr : &it->second;
}

InspectionReport Engine::inspect(const RawPacket& raw, std::uint64_t packet_index) {
    InspectionReport report;
    report.packet_index = packet_index;
    const PacketLayers layers = decode_packet(raw);
    const std::string chain = layer_chain(layers);

    auto add = [&](AlertType type, std::string reason, std::string info = {}) {
        report.violations.push_back(make_draft(type, std::move(reason), info.empty() ? chain : std::move(info)));
    };
    auto malformed = [&](const iec104::Malformed& m) {
        report.category.kind = PacketCategory::Kind::Malformed;
        add(AlertType::MALFORMED_PACKET,
            "Malformed " + m.layer + " at offset " + std::to_string(m.offset) + ": " + m.reason);
    };

    auto finish = [&]() {
        std::erase_if(report.violations, [&](const AlertDraft& d) { return !sb_.enabled(domain_of(d.type)); });
        for (auto& d : report.violations) {
            d.packet_index = packet_index;
            d.packet_time = raw.ts;
        }
        return report;
    };

    if (!layers.eth) {
        malformed(layers.diagnostics.front());
        return finish();
    }
    if (layers.eth->ether_type != 0x0800) return finish();  // not IPv4: irrelevant
    if (!layers.ip) {
        malformed(layers.diagnostics.front());
        return finish();
    }
    if (layers.ip->protocol != 6) return finish();  // only TCP-borne protocols are specified
    if (!layers.tcp) {
        malformed(layers.diagnostics.front());
        return finish();
    }
    const Ipv4Layer& ip = *layers.ip;
    const TcpLayer& tcp = *layers.tcp;
    if (!ip.checksum_ok || !tcp.checksum_ok) {
        malformed(iec104::Malformed{ip.checksum_ok ? "TCP" : "IP", 0, "checksum mismatch"});
        return finish();
    }

    // Category by server endpoint, falling back to well-known ports.
    std::optional<gim::Protocol> proto = index_.server_protocol(ip.dst_ip, tcp.dst_port);
    if (!proto) proto = index_.server_protocol(ip.src_ip, tcp.src_port);
    if (!proto) {
        if (layers.looks_like_iec104()) {
            proto = gim::Protocol::IEC104;
        } else {
            const auto by_dst = protocol_for_port(tcp.dst_port);
            proto = by_dst != gim::Protocol::OTHER ? by_dst : protocol_for_port(tcp.src_port);
        }
    }
    if (*proto == gim::Protocol::IEC104) {
        report.category.kind = PacketCategory::Kind::IEC104;
    } else {
        report.category.kind = PacketCategory::Kind::OtherWhitelistedProtocol;
        report.category.protocol = *proto;
    }

    // L2 / L3 address whitelist.
    const auto& eth = *layers.eth;
    if (!index_.known_mac(eth.src_mac))
        add(AlertType::MAC_MISMATCH, "MAC of this packet is unknown: " + eth.src_mac.str());
    else if (!index_.known_mac(eth.dst_mac))
        add(AlertType::MAC_MISMATCH, "MAC of this packet is unknown: " + eth.dst_mac.str());
    if (!index_.known_ip(ip.src_ip))
        add(AlertType::IP_MISMATCH, "IP of this packet is unknown: " + ip.src_ip.str());
    else if (!index_.known_ip(ip.dst_ip))
        add(AlertType::IP_MISMATCH, "IP of this packet is unknown: " + ip.dst_ip.str());

    // L4 port and channel whitelist.
    if (!index_.known_port(ip.src_ip, tcp.src_port, ip.dst_ip, tcp.dst_port))
        add(AlertType::PORT_MISMATCH, "One of the Ports of this packet is unknown: " + std::to_string(tcp.src_port));
    else if (!index_.known_port(ip.dst_ip, tcp.dst_port, ip.src_ip, tcp.src_port))
        add(AlertType::PORT_MISMATCH, "One of the Ports of this packet is unknown: " + std::to_string(tcp.dst_port));
    const auto match = index_.match_channel(ip.src_ip, tcp.src_port, ip.dst_ip, tcp.dst_port);
    if (!match) add(AlertType::NO_SUCH_CONNECTION, "Connection does not exist in whitelisting data!");

    // Only fully whitelisted packets reach connection state.
    if (!report.violations.empty()) return finish();

    if (match->rule->protocol != gim::Protocol::IEC104) {
        report.category.kind = PacketCategory::Kind::OtherWhitelistedProtocol;
        report.category.protocol = match->rule->protocol;
        if (auto d = check_protocol_window(match->rule->protocol, raw.ts, sb_)) add(d->type, d->reason);
        return finish();
    }
    report.category.kind = PacketCategory::Kind::IEC104;
    inspect_connection(layers, *match, raw, report);
    return finish();
}

void Engine::inspect_connection(const PacketLayers& layers, const RuleIndex::ChannelMatch& match,
                                const RawPacket& raw, InspectionReport& report) {
    const TcpLayer& tcp = *layers.tcp;
    const Ipv4Layer& ip = *layers.ip;
    const bool from_client = match.from_client;
    const ConnectionKey key = from_client ? ConnectionKey{ip.src_ip, tcp.src_port, ip.dst_ip, tcp.dst_port}
                                          : ConnectionKey{ip.dst_ip, tcp.dst_port, ip.src_ip, tcp.src_port};
    const bool opening_syn = tcp.has(tcp_flag::SYN) && !tcp.has(tcp_flag::ACK) && from_client;

    auto it = table_.find(key);
    if (it != table_.end() && opening_syn) {
        table_.erase(it);  // new connection reusing the tuple
        it = table_.end();
    }
    if (it == table_.end()) {
        const bool mid_stream = options_.assume_started && !tcp.has(tcp_flag::SYN);
        it = table_
                 .try_emplace(key, key, match.rule, mid_stream ? automata::State::Started : automata::State::Idle,
                              !mid_stream)
                 .first;
        it->second.ledger = automata::ActivationLedger(options_.activation_deadline_ns);
    }
    ConnectionObject& conn = it->second;

    if (tcp.has(tcp_flag::SYN)) (from_client ? conn.client_stream : conn.server_stream).on_syn(tcp.seq);

    if (auto d = check_rtt(conn, layers, from_client, raw.ts, sb_.max_rtt_ms,
                           options_.record_rtt ? &rtt_samples_ : nullptr))
        report.violations.push_back(*d);

    for (const auto& reason : conn.ledger.expire(raw.ts))
        report.violations.push_back(
            make_draft(AlertType::AUTOMATA_VIOLATION, "Suspicious flow: " + reason, layer_chain(layers)));

    auto& stream = from_client ? conn.client_stream : conn.server_stream;
    for (const auto& frame : stream.push(tcp.seq, tcp.payload)) inspect_frame(conn, frame, from_client, raw, report);
}

void Engine::inspect_frame(ConnectionObject& conn, const iec104::Frame& frame, bool from_client, const RawPacket& raw,
                           InspectionReport& report) {
    const std::string info = frame_info(frame);
    auto add = [&](AlertType type, std::string reason) {
        report.violations.push_back(make_draft(type, std::move(reason), info));
    };
    const Direction mtu_dir = from_client ? Direction::Sent : Direction::Received;
    const Direction rtu_dir = from_client ? Direction::Received : Direction::Sent;

    if (const auto* err = frame.error()) {
        report.category.kind = PacketCategory::Kind::Malformed;
        add(AlertType::MALFORMED_PACKET,
            "Malformed " + err->layer + " at stream offset " + std::to_string(err->offset) + ": " + err->reason);
    }
    const iec104::Apdu* apdu = frame.apdu();

    if (apdu && apdu->apci.format != iec104::FrameFormat::U) {
        auto& sender = from_client ? conn.mtu_counters : conn.rtu_counters;
        auto& receiver = from_client ? conn.rtu_counters : conn.mtu_counters;
        automata::seed_counters(sender, apdu->apci, Direction::Sent);
        automata::seed_counters(receiver, apdu->apci, Direction::Received);
        if (sender.synced && receiver.synced) {
            auto before_receiver = receiver;
            auto r = automata::check_sequence(sender, apdu->apci, Direction::Sent);
            if (r.kind == automata::SeqResult::Kind::Violation) {
                add(AlertType::SEQUENCE_VIOLATION, "Sequence number violation (" + r.reason + "): expected " +
                                                       std::to_string(r.expected) + ", got " + std::to_string(r.got));
            } else {
                if (r.kind == automata::SeqResult::Kind::WindowExceeded)
                    add(AlertType::SEQUENCE_VIOLATION, "Suspicious flow: " + r.reason + " (" +
                                                           std::to_string(r.got) + " outstanding)");
                auto rr = automata::check_sequence(receiver, apdu->apci, Direction::Received);
                if (rr.kind == automata::SeqResult::Kind::Violation) {
                    receiver = before_receiver;
                    add(AlertType::SEQUENCE_VIOLATION, "Sequence number violation (" + rr.reason + "): expected " +
                                                           std::to_string(rr.expected) + ", got " +
                                                           std::to_string(rr.got));
                }
            }
        }
    }

    if (apdu && apdu->asdu && apdu->asdu->supported()) {
        const iec104::Asdu& asdu = *apdu->asdu;
        for (auto& d : check_datapoint(asdu, from_client, conn, index_)) {
            d.packet_info = info;
            report.violations.push_back(std::move(d));
        }
        if (iec104::is_control_type(asdu.type_id)) {
            for (const auto& obj : asdu.objects) {
                auto it = sb_.datapoints.find(rules::DatapointKey{conn.key.server_ip, asdu.common_address, obj.ioa});
                if (it == sb_.datapoints.end()) continue;
                if (auto d = check_setpoint(obj, it->second)) add(d->type, d->reason);
            }
        }
        auto status = conn.ledger.observe(asdu, from_client ? Role::MTU : Role::RTU, raw.ts);
        if (!status.ok()) add(AlertType::AUTOMATA_VIOLATION, "Suspicious flow: " + status.reason);
    }

    const automata::Symbol mtu_sym = apdu ? automata::map_apdu(*apdu, mtu_dir) : automata::Symbol::Error;
    const automata::Symbol rtu_sym = apdu ? automata::map_apdu(*apdu, rtu_dir) : automata::Symbol::Error;
    const automata::State mtu_state = conn.mtu_automaton.state();
    const automata::State rtu_state = conn.rtu_automaton.state();
    const auto mtu_status = conn.mtu_automaton.step(mtu_sym);
    const auto rtu_status = conn.rtu_automaton.step(rtu_sym);
    if (!mtu_status.ok())
        add(AlertType::AUTOMATA_VIOLATION, "MTU automaton rejected " + automata::to_string(mtu_sym) + " in state " +
                                               automata::to_string(mtu_state) + ": " + mtu_status.reason);
    else if (!rtu_status.ok())
        add(AlertType::AUTOMATA_VIOLATION, "RTU automaton rejected " + automata::to_string(rtu_sym) + " in state " +
                                               automata::to_string(rtu_state) + ": " + rtu_status.reason);
}

std::size_t shard_of(const RawPacket& raw, std::size_t shards) {
    if (shards <= 1) return 0;
    ByteView b(raw.link_bytes);
    if (b.size() < 14 + 20 || load_be16(b, 12) != 0x0800) return 0;
    const std::size_t ihl = std::size_t{b[14] & 0x0fu} * 4;
    if (b[14 + 9] != 6 || b.size() < 14 + ihl + 4) return 0;
    std::uint64_t a = (std::uint64_t{load_be32(b, 26)} << 16) | load_be16(b, 14 + ihl);
    std::uint64_t c = (std::uint64_t{load_be32(b, 30)} << 16) | load_be16(b, 14 + ihl + 2);
    if (a > c) std::swap(a, c);
    const std::uint64_t h = (a * 0x9E3779B97F4A7C15ULL) ^ (c + 0x632BE59BD9B4E019ULL + (a << 6) + (a >> 2));
    return static_cast<std::size_t>(h % shards);
}

} // namespace gridwatch::engine
