#include "gridwatch/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace gridwatch::harness {

using iec104::Apdu;
using iec104::Asdu;
using iec104::InformationObject;

namespace {

constexpr std::int64_t kMs = 1'000'000;

struct Peer {
    MacAddress mac;
    Ipv4Address ip;
    std::uint16_t port = 0;
};

struct Emitted {
    RawPacket packet;
    bool malicious = false;
    std::string tag;
    int stream = 0;  // tie-break for equal timestamps
};

struct Bounds {
    double lo = 0;
    double hi = 100;
};

// One RTU as seen by the generator.
struct Station {
    const gim::AssetNode* node = nullptr;
    std::uint16_t common_address = 0;
    std::vector<gim::DataPoint> monitors;
    std::vector<gim::DataPoint> setpoints;
    std::map<std::uint32_t, double> last;
};

Bounds bounds_of(const gim::DataPoint& dp, const gim::AssetNode& node) {
    if (dp.min_value && dp.max_value) return {*dp.min_value, *dp.max_value};
    if (node.op_limits) {
        const auto& l = *node.op_limits;
        if (dp.unit == "kW") return {-l.p_max_kw, l.p_max_kw};
        if (dp.unit == "kvar") return {-l.q_max_kvar, l.q_max_kvar};
        if (dp.unit == "cos_phi") return {l.cos_phi_min, l.cos_phi_max};
    }
    if (dp.unit == "cos_phi") return {-1, 1};
    return {dp.min_value.value_or(0), dp.max_value.value_or(dp.min_value.value_or(0) + 100)};
}

// Keeps generated floats strictly inside the bounds after float rounding.
double inside(double v, Bounds b) {
    const double margin = (b.hi - b.lo) * 0.01;
    return std::clamp(v, b.lo + margin, b.hi - margin);
}

// One TCP connection carrying IEC 104 between an MTU (client) and an RTU.
// Stop-and-wait: every data segment is acknowledged by the peer's next
// segment one round trip later.
class Conversation {
public:
    Conversation(Peer client, Peer server, std::int64_t start_ns, std::mt19937_64& rng, double rtt_min, double rtt_max,
                 int stream, std::string tag)
        : client_(client), server_(server), t_(start_ns), rng_(&rng), rtt_min_(rtt_min), rtt_max_(rtt_max),
          stream_(stream), tag_(std::move(tag)) {
        c_next_ = static_cast<std::uint32_t>((*rng_)());
        s_next_ = static_cast<std::uint32_t>((*rng_)());
    }

    std::vector<Emitted> packets;
    bool malicious = false;
    std::optional<double> fixed_rtt_ms;

    std::int64_t now() const { return t_; }
    void idle(double min_ms, double max_ms) { t_ += ms(uniform(min_ms, max_ms)); }
    void at(std::int64_t ns) { t_ = std::max(t_, ns); }

    void handshake() {
        segment(true, {}, tcp_flag::SYN);
        c_next_ += 1;
        t_ += ms(rtt());
        segment(false, {}, tcp_flag::SYN | tcp_flag::ACK);
        s_next_ += 1;
        t_ += ms(uniform(0.1, 1.0));
        segment(true, {}, tcp_flag::ACK);
    }

    // Sends one APDU. I- and S-frames get their sequence numbers here.
    void message(bool from_client, Apdu apdu, bool inject = false) {
        if (pending_) {
            if (*pending_ == from_client) {
                t_ += ms(rtt());
                segment(!from_client, {}, tcp_flag::ACK);
                t_ += ms(uniform(2, 20));
            } else {
                t_ += ms(rtt());
            }
        }
        std::uint16_t& vs = from_client ? mtu_vs_ : rtu_vs_;
        const std::uint16_t vr = from_client ? rtu_vs_ : mtu_vs_;
        if (apdu.apci.format == iec104::FrameFormat::I) {
            apdu = iec104::make_i_frame(vs, vr, *apdu.asdu);
            vs = automata::seq_add(vs, 1);
        } else if (apdu.apci.format == iec104::FrameFormat::S) {
            apdu = iec104::make_s_frame(vr);
        }
        if (apdu.apci.format != iec104::FrameFormat::U) (from_client ? mtu_acked_ : rtu_acked_) = vr;
        const Bytes payload = iec104::encode_apdu(apdu);
        const bool was = malicious;
        malicious = was || inject;
        segment(from_client, payload, tcp_flag::PSH | tcp_flag::ACK);
        malicious = was;
        pending_ = from_client;
    }

    // Acknowledges the last data segment.
    void settle() {
        if (!pending_) return;
        t_ += ms(rtt());
        segment(!*pending_, {}, tcp_flag::ACK);
        pending_.reset();
    }

    // Duplicate pure ACK from the client.
    void keepalive_ack() {
        settle();
        segment(true, {}, tcp_flag::ACK);
    }

    // I-frames received by `side` and not yet acknowledged by it.
    std::uint16_t unacked_by(bool client) const {
        return client ? automata::seq_distance(mtu_acked_, rtu_vs_) : automata::seq_distance(rtu_acked_, mtu_vs_);
    }

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(*rng_); }
    std::uint64_t pick(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(*rng_); }
    Timestamp time() const { return Timestamp::from_ns(t_); }

private:
    static std::int64_t ms(double v) { return static_cast<std::int64_t>(std::llround(v * 1e6)); }
    double rtt() { return fixed_rtt_ms ? *fixed_rtt_ms : uniform(rtt_min_, rtt_max_); }

    void segment(bool from_client, const Bytes& payload, std::uint8_t flags) {
        const Peer& src = from_client ? client_ : server_;
        const Peer& dst = from_client ? server_ : client_;
        std::uint32_t& seq = from_client ? c_next_ : s_next_;
        const std::uint32_t ack = from_client ? s_next_ : c_next_;
        TcpFrameSpec spec;
        spec.src_mac = src.mac;
        spec.dst_mac = dst.mac;
        spec.src_ip = src.ip;
        spec.dst_ip = dst.ip;
        spec.src_port = src.port;
        spec.dst_port = dst.port;
        spec.seq = seq;
        spec.ack = (flags & tcp_flag::ACK) ? ack : 0;
        spec.flags = flags;
        spec.ip_id = ip_id_++;
        Emitted e;
        e.packet.ts = Timestamp::from_ns(t_);
        e.packet.link_bytes = build_tcp_frame(spec, payload);
        e.malicious = malicious;
        e.tag = tag_;
        e.stream = stream_;
        packets.push_back(std::move(e));
        seq += static_cast<std::uint32_t>(payload.size());
    }

    Peer client_;
    Peer server_;
    std::int64_t t_;
    std::mt19937_64* rng_;
    double rtt_min_;
    double rtt_max_;
    int stream_;
    std::string tag_;
    std::uint32_t c_next_ = 0;
    std::uint32_t s_next_ = 0;
    std::uint16_t ip_id_ = 1;
    std::uint16_t mtu_vs_ = 0;
    std::uint16_t rtu_vs_ = 0;
    std::uint16_t mtu_acked_ = 0;
    std::uint16_t rtu_acked_ = 0;
    std::optional<bool> pending_;
};

Apdu i_frame(Asdu asdu) { return iec104::make_i_frame(0, 0, std::move(asdu)); }

Asdu make_asdu(std::uint8_t type_id, std::uint8_t cot, std::uint16_t ca, std::vector<InformationObject> objects) {
    Asdu a;
    a.type_id = type_id;
    a.cot = cot;
    a.common_address = ca;
    a.objects = std::move(objects);
    a.num_objects = static_cast<std::uint8_t>(a.objects.size());
    return a;
}

InformationObject interrogation_object() {
    InformationObject o;
    o.ioa = 0;
    o.qualifier = 20;  // station interrogation
    return o;
}

InformationObject measurement(const gim::DataPoint& dp, double value, Timestamp ts) {
    InformationObject o;
    o.ioa = dp.ioa;
    if (dp.asdu_type == iec104::type::M_SP_NA_1) {
        o.value = value >= 0.5;
        o.qualifier = 0;
    } else {
        o.value = static_cast<float>(value);
        o.qualifier = 0;
        if (dp.asdu_type == iec104::type::M_ME_TF_1) o.time_tag = cp56_time(ts);
    }
    return o;
}

// Generator-side state of the legitimate system.
class Testbed {
public:
    Testbed(const gim::Gim& model, std::mt19937_64& rng, const ScenarioParams& params) : rng_(&rng), params_(params) {
        const gim::AssetNode* mtu = nullptr;
        for (const auto& e : model.edges) {
            if (e.kind != gim::EdgeKind::CommChannel || !e.channel || e.channel->protocol != gim::Protocol::IEC104)
                continue;
            const auto* client = model.find(e.channel->client);
            const auto* server = model.find(e.channel->server);
            if (!client || !server || client->kind != gim::AssetKind::MTU || !client->mac || !client->ip ||
                !server->mac || !server->ip)
                continue;
            if (mtu && mtu != client) continue;
            mtu = client;
            Station st;
            st.node = server;
            for (const auto& dp : server->data_points) {
                st.common_address = dp.common_address;
                if (dp.direction == gim::Direction::Monitor) {
                    if (iec104::is_supported_type(dp.asdu_type)) st.monitors.push_back(dp);
                } else if (dp.asdu_type == iec104::type::C_SE_NC_1) {
                    st.setpoints.push_back(dp);
                }
            }
            if (st.monitors.empty()) continue;
            servers_.push_back(Peer{*server->mac, *server->ip, e.channel->server_port});
            stations_.push_back(std::move(st));
        }
        if (!mtu || stations_.empty())
            throw FixtureError("model needs an MTU with an IEC104 channel to an RTU hosting monitor data points");
        mtu_ = Peer{*mtu->mac, *mtu->ip, 0};
        for (auto& st : stations_)
            for (const auto& dp : st.monitors) {
                const Bounds b = bounds_of(dp, *st.node);
                st.last[dp.ioa] = dp.asdu_type == iec104::type::M_SP_NA_1 ? 1.0 : inside((b.lo + b.hi) / 2, b);
            }
    }

    std::size_t size() const { return stations_.size(); }
    Station& station(std::size_t i) { return stations_[i]; }

    Conversation open(std::size_t i, std::int64_t start_ns) {
        Peer client = mtu_;
        client.port = static_cast<std::uint16_t>(49152 + (*rng_)() % 16000);
        return Conversation(client, servers_[i], start_ns, *rng_, params_.rtt_min_ms, params_.rtt_max_ms,
                            static_cast<int>(i), "S1");
    }

    const Peer& server(std::size_t i) const { return servers_[i]; }

    double next_value(Station& st, const gim::DataPoint& dp, Conversation& c) {
        double& v = st.last[dp.ioa];
        if (dp.asdu_type == iec104::type::M_SP_NA_1) {
            if (c.uniform(0, 1) < 0.3) v = v >= 0.5 ? 0.0 : 1.0;
            return v;
        }
        const Bounds b = bounds_of(dp, *st.node);
        v = inside(v + c.uniform(-0.05, 0.05) * (b.hi - b.lo), b);
        return v;
    }

    // S-frame from the MTU once w I-frames are outstanding.
    static void ack_window(Conversation& c) {
        if (c.unacked_by(true) >= 8) c.message(true, iec104::make_s_frame(0));
    }

    void startdt(Conversation& c) {
        c.message(true, iec104::make_u_frame(iec104::UFunction::StartDtAct));
        c.message(false, iec104::make_u_frame(iec104::UFunction::StartDtCon));
        c.settle();
    }

    void testfr(Conversation& c) {
        c.message(true, iec104::make_u_frame(iec104::UFunction::TestFrAct));
        c.message(false, iec104::make_u_frame(iec104::UFunction::TestFrCon));
        c.settle();
    }

    void interrogation(Conversation& c, Station& st) {
        const auto ca = st.common_address;
        c.message(true, i_frame(make_asdu(iec104::type::C_IC_NA_1, iec104::cot::Activation, ca, {interrogation_object()})));
        c.message(false,
                  i_frame(make_asdu(iec104::type::C_IC_NA_1, iec104::cot::ActivationCon, ca, {interrogation_object()})));
        std::map<std::uint8_t, std::vector<InformationObject>> by_type;
        for (const auto& dp : st.monitors)
            by_type[dp.asdu_type].push_back(measurement(dp, next_value(st, dp, c), c.time()));
        for (auto& [type_id, objects] : by_type)
            c.message(false, i_frame(make_asdu(type_id, iec104::cot::Interrogated, ca, objects)));
        c.message(false,
                  i_frame(make_asdu(iec104::type::C_IC_NA_1, iec104::cot::ActivationTerm, ca, {interrogation_object()})));
        c.message(true, iec104::make_s_frame(0));
        c.settle();
    }

    void spontaneous(Conversation& c, Station& st) {
        const auto& dp = st.monitors[c.pick(st.monitors.size())];
        c.message(false, i_frame(make_asdu(dp.asdu_type, iec104::cot::Spontaneous, st.common_address,
                                           {measurement(dp, next_value(st, dp, c), c.time())})));
        c.settle();
        ack_window(c);
        c.settle();
    }

    bool setpoint(Conversation& c, Station& st) {
        if (st.setpoints.empty()) return false;
        const auto& dp = st.setpoints[c.pick(st.setpoints.size())];
        const Bounds b = bounds_of(dp, *st.node);
        InformationObject o;
        o.ioa = dp.ioa;
        o.value = static_cast<float>(inside(c.uniform(b.lo, b.hi), b));
        o.qualifier = 0;
        c.message(true, i_frame(make_asdu(dp.asdu_type, iec104::cot::Activation, st.common_address, {o})));
        c.message(false, i_frame(make_asdu(dp.asdu_type, iec104::cot::ActivationCon, st.common_address, {o})));
        c.settle();
        return true;
    }

    // Injected monitor-direction frame as sent through the intercepted channel.
    void inject(Conversation& c, Station& st, ScenarioId id, const std::string& tag) {
        InformationObject o;
        std::uint8_t type_id = iec104::type::M_ME_NC_1;
        if (id == ScenarioId::S2B1) {
            std::set<std::uint32_t> used;
            for (const auto& dp : st.node->data_points)
                if (dp.common_address == st.common_address) used.insert(dp.ioa);
            std::uint32_t ioa;
            do {
                ioa = static_cast<std::uint32_t>(5000 + c.pick(4000));
            } while (used.count(ioa));
            o.ioa = ioa;
            o.value = static_cast<float>(c.uniform(0, 50));
            o.qualifier = 0;
        } else {
            std::vector<const gim::DataPoint*> analog;
            for (const auto& dp : st.monitors)
                if (dp.asdu_type != iec104::type::M_SP_NA_1) analog.push_back(&dp);
            const gim::DataPoint& dp = analog.empty() ? st.monitors.front() : *analog[c.pick(analog.size())];
            type_id = dp.asdu_type;
            const Bounds b = bounds_of(dp, *st.node);
            double v = st.last[dp.ioa];
            if (type_id != iec104::type::M_SP_NA_1) v = inside(v + c.uniform(-0.01, 0.01) * (b.hi - b.lo), b);
            o = measurement(dp, v, c.time());
        }
        (void)tag;
        c.message(false, i_frame(make_asdu(type_id, iec104::cot::Spontaneous, st.common_address, {o})), true);
        c.settle();
        ack_window(c);
        c.settle();
    }

private:
    std::mt19937_64* rng_;
    ScenarioParams params_;
    Peer mtu_;
    std::vector<Peer> servers_;
    std::vector<Station> stations_;
};

LabeledCapture assemble(std::vector<Emitted> all) {
    std::stable_sort(all.begin(), all.end(), [](const Emitted& a, const Emitted& b) {
        if (a.packet.ts != b.packet.ts) return a.packet.ts < b.packet.ts;
        return a.stream < b.stream;
    });
    LabeledCapture out;
    for (std::size_t i = 0; i < all.size(); ++i) {
        out.labels.push_back(Label{i, all[i].malicious, all[i].tag});
        out.packets.push_back(std::move(all[i].packet));
    }
    return out;
}

// Rogue client performing STARTDT and an interrogation against a real RTU.
std::vector<Emitted> rogue_conversation(Testbed& bed, std::mt19937_64& rng, const ScenarioParams& params,
                                        std::int64_t start_ns, std::size_t count) {
    if (count < 10) throw FixtureError("rogue conversation needs at least 10 packets");
    Peer rogue;
    rogue.mac = MacAddress{{0x02, 0x42, 0xac, 0x18, 0x00, 0x03}};
    rogue.ip = Ipv4Address::from_octets(173, 24, 0, 3);
    rogue.port = static_cast<std::uint16_t>(49152 + rng() % 16000);
    Station& st = bed.station(0);
    Conversation c(rogue, bed.server(0), start_ns, rng, params.rtt_min_ms, params.rtt_max_ms, 100, "S2A-rogue");
    c.malicious = true;
    const auto ca = st.common_address;
    c.handshake();
    c.at(c.now() + 20 * kMs);
    c.message(true, iec104::make_u_frame(iec104::UFunction::StartDtAct));
    c.message(false, iec104::make_u_frame(iec104::UFunction::StartDtCon));
    c.message(true, i_frame(make_asdu(iec104::type::C_IC_NA_1, iec104::cot::Activation, ca, {interrogation_object()})));
    c.message(false,
              i_frame(make_asdu(iec104::type::C_IC_NA_1, iec104::cot::ActivationCon, ca, {interrogation_object()})));
    // 7 so far; each data frame adds itself plus the rogue's ACK.
    const std::size_t remaining = count - 7;
    const std::size_t pairs = (remaining - 3) / 2;
    for (std::size_t i = 0; i < pairs; ++i) {
        const auto& dp = st.monitors[i % st.monitors.size()];
        c.message(false, i_frame(make_asdu(dp.asdu_type, iec104::cot::Interrogated, ca,
                                           {measurement(dp, st.last[dp.ioa], c.time())})));
    }
    c.message(false,
              i_frame(make_asdu(iec104::type::C_IC_NA_1, iec104::cot::ActivationTerm, ca, {interrogation_object()})));
    if (remaining - 2 * pairs == 4) c.message(true, iec104::make_s_frame(0));
    c.settle();
    if (c.packets.size() != count) throw FixtureError("rogue conversation size mismatch");
    return std::move(c.packets);
}

} // namespace

std::string to_string(ScenarioId id) {
    switch (id) {
    case ScenarioId::S1: return "S1";
    case ScenarioId::S2A: return "S2A";
    case ScenarioId::S2B1: return "S2B1";
    case ScenarioId::S2B2: return "S2B2";
    }
    return "?";
}

std::optional<ScenarioId> parse_scenario_id(std::string_view s) {
    for (auto id : {ScenarioId::S1, ScenarioId::S2A, ScenarioId::S2B1, ScenarioId::S2B2})
        if (to_string(id) == s) return id;
    return std::nullopt;
}

std::array<std::uint8_t, 7> cp56_time(Timestamp ts) {
    std::time_t t = static_cast<std::time_t>(ts.sec);
    std::tm tm{};
    gmtime_r(&t, &tm);
    const unsigned ms = static_cast<unsigned>(tm.tm_sec) * 1000 + ts.nsec / 1'000'000;
    const int dow = tm.tm_wday == 0 ? 7 : tm.tm_wday;
    return {static_cast<std::uint8_t>(ms & 0xff),
            static_cast<std::uint8_t>(ms >> 8),
            static_cast<std::uint8_t>(tm.tm_min & 0x3f),
            static_cast<std::uint8_t>(tm.tm_hour & 0x1f),
            static_cast<std::uint8_t>((tm.tm_mday & 0x1f) | (dow << 5)),
            static_cast<std::uint8_t>((tm.tm_mon + 1) & 0x0f),
            static_cast<std::uint8_t>((tm.tm_year - 100) & 0x7f)};
}

LabeledCapture generate_scenario(ScenarioId id, std::uint64_t seed, const gim::Gim& model,
                                 const ScenarioParams& params) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(id) + 1);
    Testbed bed(model, rng, params);
    const std::int64_t base = params.start_epoch * 1'000'000'000;

    std::vector<Conversation> convs;
    for (std::size_t i = 0; i < bed.size(); ++i) {
        convs.push_back(bed.open(i, base + static_cast<std::int64_t>(i) * 300 * kMs));
        Conversation& c = convs.back();
        c.handshake();
        c.idle(5, 30);
        bed.startdt(c);
        c.idle(20, 200);
        bed.interrogation(c, bed.station(i));
    }
    auto benign_count = [&]() {
        std::size_t n = 0;
        for (const auto& c : convs)
            for (const auto& p : c.packets) n += p.malicious ? 0 : 1;
        return n;
    };
    const bool injecting = id == ScenarioId::S2B1 || id == ScenarioId::S2B2;
    std::size_t injected = 0;
    const std::size_t target = params.benign_packets;
    if (benign_count() > target) throw FixtureError("benign packet budget too small for connection setup");

    // Benign packets belonging to injection transactions do not count towards the budget.
    std::size_t injection_overhead = 0;
    std::size_t misses = 0;
    while (misses < 8) {
        if (injecting && injected < params.injected_frames && bed.size() > 0 && rng() % 6 == 0) {
            const std::size_t i = rng() % bed.size();
            Conversation& c = convs[i];
            const std::size_t before = c.packets.size();
            c.idle(100, 1500);
            bed.inject(c, bed.station(i), id, to_string(id));
            injection_overhead += c.packets.size() - before - 1;
            ++injected;
            continue;
        }
        const std::size_t i = rng() % bed.size();
        Conversation trial = convs[i];
        trial.idle(200, 2500);
        const auto roll = rng() % 100;
        if (roll < 45) {
            bed.spontaneous(trial, bed.station(i));
        } else if (roll < 65) {
            bed.interrogation(trial, bed.station(i));
        } else if (roll < 80) {
            bed.testfr(trial);
        } else if (!bed.setpoint(trial, bed.station(i))) {
            bed.testfr(trial);
        }
        const std::size_t added = trial.packets.size() - convs[i].packets.size();
        if (benign_count() - injection_overhead + added > target) {
            ++misses;
            continue;
        }
        misses = 0;
        convs[i] = std::move(trial);
    }
    while (injecting && injected < params.injected_frames) {
        const std::size_t i = injected % bed.size();
        Conversation& c = convs[i];
        const std::size_t before = c.packets.size();
        c.idle(100, 1500);
        bed.inject(c, bed.station(i), id, to_string(id));
        injection_overhead += c.packets.size() - before - 1;
        ++injected;
    }
    for (std::size_t k = 0; benign_count() - injection_overhead < target; ++k) {
        Conversation& c = convs[k % convs.size()];
        c.idle(200, 1000);
        c.keepalive_ack();
    }

    std::vector<Emitted> all;
    std::int64_t end = base;
    for (auto& c : convs) {
        end = std::max(end, c.now());
        for (auto& p : c.packets) {
            if (p.malicious) p.tag = to_string(id) + "-injected";
            else if (id != ScenarioId::S1) p.tag = to_string(id) + "-background";
            all.push_back(std::move(p));
        }
    }
    if (id == ScenarioId::S2A) {
        const std::int64_t span = std::max<std::int64_t>(end - base, 1'000 * kMs);
        const std::int64_t start = base + 500 * kMs + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(span / 2));
        auto rogue = rogue_conversation(bed, rng, params, start, params.rogue_packets);
        for (auto& p : rogue) all.push_back(std::move(p));
    }
    return assemble(std::move(all));
}

LabeledCapture rogue_endpoint_capture(const gim::Gim& model) {
    std::mt19937_64 rng(14042022);
    ScenarioParams params;
    Testbed bed(model, rng, params);
    const gim::AssetNode* gateway = nullptr;
    for (const auto& n : model.nodes)
        if (n.kind == gim::AssetKind::FIREWALL && n.mac) gateway = &n;
    if (!gateway) throw FixtureError("rogue endpoint capture needs a FIREWALL node with a MAC address");
    Station& st = bed.station(0);
    if (st.setpoints.empty()) throw FixtureError("rogue endpoint capture needs a set-point data point on the RTU");

    const std::int64_t base = params.start_epoch * 1'000'000'000;
    Conversation c = bed.open(0, base);
    c.fixed_rtt_ms = 60;
    c.handshake();
    c.at(base + 100 * kMs);
    bed.startdt(c);

    // Rogue STARTDT routed through the gateway.
    Peer rogue{gateway->mac.value(), Ipv4Address::from_octets(173, 24, 0, 3), 59478};
    Conversation r(rogue, bed.server(0), base + 500 * kMs, rng, 60, 60, 1, "rogue");
    r.malicious = true;
    r.message(true, iec104::make_u_frame(iec104::UFunction::StartDtAct));

    // The RTU issues a set-point it is not allowed to send, far outside its limits.
    c.at(base + 51'100 * kMs);
    const auto& dp = st.setpoints.front();
    const Bounds b = bounds_of(dp, *st.node);
    InformationObject o;
    o.ioa = dp.ioa;
    o.value = static_cast<float>(b.hi * 10 + 1000);
    o.qualifier = 0;
    c.malicious = true;
    c.message(false, i_frame(make_asdu(dp.asdu_type, iec104::cot::Activation, st.common_address, {o})));
    c.malicious = false;
    c.settle();

    std::vector<Emitted> all;
    for (auto& p : c.packets) all.push_back(std::move(p));
    for (auto& p : r.packets) all.push_back(std::move(p));
    return assemble(std::move(all));
}

LatencyStats summarize(std::vector<double> samples) {
    LatencyStats s;
    s.count = samples.size();
    if (samples.empty()) return s;
    std::sort(samples.begin(), samples.end());
    double sum = 0;
    for (double v : samples) sum += v;
    s.mean_ms = sum / static_cast<double>(samples.size());
    auto rank = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size()))) - 1;
        return samples[std::min(idx, samples.size() - 1)];
    };
    s.p50_ms = rank(0.5);
    s.p95_ms = rank(0.95);
    return s;
}

std::vector<alerting::AlertDraft> ReplayResult::drafts() const {
    std::vector<alerting::AlertDraft> out;
    for (const auto& r : reports)
        for (const auto& d : r.violations) out.push_back(d);
    return out;
}

ReplayResult replay(const std::vector<RawPacket>& packets, const rules::SpecificationBase& sb,
                    const ReplayOptions& options) {
    ReplayResult result;
    result.reports.resize(packets.size());
    result.latency_ms.resize(packets.size());
    const std::size_t workers = std::max<std::size_t>(1, options.workers);

    std::vector<std::vector<std::size_t>> shards(workers);
    for (std::size_t i = 0; i < packets.size(); ++i) shards[engine::shard_of(packets[i], workers)].push_back(i);
    std::vector<std::vector<double>> rtts(workers);

    auto run = [&](std::size_t w) {
        engine::Engine eng(sb, options.engine);
        // Alert rendering is part of per-packet processing cost.
        alerting::AlertGenerator render(alerting::AlertClock::fixed(0));
        std::ostringstream sink;
        const auto wall_start = std::chrono::steady_clock::now();
        const std::int64_t capture_start = packets.empty() ? 0 : packets.front().ts.ns();
        for (std::size_t i : shards[w]) {
            if (options.paced)
                std::this_thread::sleep_until(wall_start + std::chrono::nanoseconds(packets[i].ts.ns() - capture_start));
            const auto t0 = std::chrono::steady_clock::now();
            result.reports[i] = eng.inspect(packets[i], i);
            for (const auto& d : result.reports[i].violations) alerting::write_section(sink, render.emit(d));
            const auto t1 = std::chrono::steady_clock::now();
            result.latency_ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
            if (sink.tellp() > (1 << 20)) sink.str({});
        }
        rtts[w] = eng.rtt_samples();
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w);
        for (auto& t : threads) t.join();
    }
    for (auto& r : rtts) result.rtt_samples_ms.insert(result.rtt_samples_ms.end(), r.begin(), r.end());

    std::vector<double> valid, invalid;
    for (std::size_t i = 0; i < packets.size(); ++i)
        (result.reports[i].conformant() ? valid : invalid).push_back(result.latency_ms[i]);
    result.valid = summarize(std::move(valid));
    result.invalid = summarize(std::move(invalid));
    return result;
}

std::vector<alerting::Alert> emit_alerts(const std::vector<alerting::AlertDraft>& drafts, alerting::AlertClock clock) {
    alerting::AlertGenerator gen(std::move(clock));
    std::vector<alerting::Alert> out;
    out.reserve(drafts.size());
    for (const auto& d : drafts) out.push_back(gen.emit(d));
    return out;
}

std::string ConfusionMatrix::str() const {
    return "tp=" + std::to_string(tp) + " tn=" + std::to_string(tn) + " fp=" + std::to_string(fp) +
           " fn=" + std::to_string(fn);
}

void check_labels(const std::vector<Label>& labels, std::size_t packet_count) {
    if (labels.size() != packet_count)
        throw LabelMismatch("label count " + std::to_string(labels.size()) + " does not match packet count " +
                            std::to_string(packet_count));
    std::vector<bool> seen(packet_count, false);
    for (const auto& l : labels) {
        if (l.index >= packet_count || seen[l.index])
            throw LabelMismatch("label index " + std::to_string(l.index) + " is out of range or duplicated");
        seen[l.index] = true;
    }
}

ConfusionMatrix score(const std::vector<alerting::Alert>& alerts, const std::vector<Label>& labels) {
    std::map<std::uint64_t, bool> truth;
    for (const auto& l : labels)
        if (!truth.emplace(l.index, l.malicious).second)
            throw LabelMismatch("duplicate label for packet " + std::to_string(l.index));
    std::set<std::uint64_t> flagged;
    for (const auto& a : alerts) {
        if (!truth.count(a.packet_index))
            throw LabelMismatch("alert " + std::to_string(a.id) + " references unlabeled packet " +
                                std::to_string(a.packet_index));
        flagged.insert(a.packet_index);
    }
    ConfusionMatrix m;
    for (const auto& [index, malicious] : truth) {
        const bool predicted = flagged.count(index) != 0;
        if (malicious) (predicted ? m.tp : m.fn)++;
        else (predicted ? m.fp : m.tn)++;
    }
    return m;
}

std::string format_labels(const std::vector<Label>& labels) {
    std::string out;
    for (const auto& l : labels) {
        nlohmann::json j{{"index", l.index}, {"malicious", l.malicious}, {"scenario_tag", l.scenario_tag}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<Label> parse_labels(std::string_view text) {
    std::vector<Label> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back(Label{j.at("index").get<std::uint64_t>(), j.at("malicious").get<bool>(),
                                j.at("scenario_tag").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw LabelMismatch("label line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

double numeric_value(const iec104::Value& v) {
    if (const auto* f = std::get_if<float>(&v)) return *f;
    if (const auto* b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
    return 0.0;
}

} // namespace gridwatch::harness
