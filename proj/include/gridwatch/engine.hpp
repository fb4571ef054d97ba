#pragma once

// Deep packet inspection: categorises packets, matches them against the
// specification base and drives per-connection flow checks.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "gridwatch/alerting.hpp"
#include "gridwatch/automata.hpp"
#include "gridwatch/packet.hpp"
#include "gridwatch/rules.hpp"

namespace gridwatch::engine {

using alerting::AlertDraft;

struct PacketCategory {
    enum class Kind : std::uint8_t { IEC104, OtherWhitelistedProtocol, Irrelevant, Malformed };
    Kind kind = Kind::Irrelevant;
    gim::Protocol protocol = gim::Protocol::OTHER;  // meaningful for OtherWhitelistedProtocol

    bool operator==(const PacketCategory&) const = default;
};
std::string to_string(const PacketCategory& c);

struct InspectionReport {
    std::uint64_t packet_index = 0;
    PacketCategory category;
    std::vector<AlertDraft> violations;

    bool conformant() const { return violations.empty(); }
};

// Lookup structures derived from a specification base.
class RuleIndex {
public:
    explicit RuleIndex(const rules::SpecificationBase& sb);

    const rules::SpecificationBase& sb() const { return *sb_; }
    bool known_mac(const MacAddress& mac) const { return macs_.count(mac) != 0; }
    bool known_ip(Ipv4Address ip) const { return ip_to_node_.count(ip) != 0; }
    const std::string* node_for(Ipv4Address ip) const;
    bool may(Ipv4Address ip, rules::Operation op) const;

    // Returns the whitelisted channel for a segment in either direction and
    // whether the segment travels client -> server.
    struct ChannelMatch {
        const rules::ChannelRule* rule = nullptr;
        bool from_client = false;
    };
    std::optional<ChannelMatch> match_channel(Ipv4Address src_ip, std::uint16_t src_port, Ipv4Address dst_ip,
                                              std::uint16_t dst_port) const;
    // A port is known when it is a channel server port of that address, or
    // the ephemeral port of a channel client talking to that server.
    bool known_port(Ipv4Address ip, std::uint16_t port, Ipv4Address peer_ip, std::uint16_t peer_port) const;
    std::optional<gim::Protocol> server_protocol(Ipv4Address ip, std::uint16_t port) const;
    bool known_common_address(Ipv4Address server_ip, std::uint16_t ca) const;

private:
    const rules::SpecificationBase* sb_;
    std::set<MacAddress> macs_;
    std::map<Ipv4Address, std::string> ip_to_node_;
    std::map<std::tuple<Ipv4Address, Ipv4Address, std::uint16_t>, const rules::ChannelRule*> channels_;
    std::map<std::pair<Ipv4Address, std::uint16_t>, gim::Protocol> servers_;
    std::set<std::tuple<Ipv4Address, Ipv4Address, std::uint16_t>> client_to_server_;
    std::set<std::pair<Ipv4Address, std::uint16_t>> common_addresses_;
};

// In-order byte stream of one TCP direction, cut into APDUs. Out-of-order
// segments are held in a bounded window until the gap closes.
class StreamReassembler {
public:
    static constexpr std::size_t kMaxPendingSegments = 64;

    void on_syn(std::uint32_t seq);
    std::vector<iec104::Frame> push(std::uint32_t seq, ByteView payload);
    std::size_t buffered() const { return buffer_.size(); }
    std::size_t pending_segments() const { return pending_.size(); }
    std::uint64_t dropped_segments() const { return dropped_; }

private:
    void append(std::uint32_t seq, ByteView payload);
    void extract(std::vector<iec104::Frame>& out);

    bool initialised_ = false;
    std::uint32_t next_seq_ = 0;
    std::uint64_t stream_offset_ = 0;
    Bytes buffer_;
    std::map<std::uint32_t, Bytes> pending_;
    std::uint64_t dropped_ = 0;
};

// Per-direction bookkeeping of unacknowledged data segments.
class RttTracker {
public:
    static constexpr std::int64_t kExpiryNs = 10'000'000'000;

    void on_data(bool from_client, std::uint32_t end_seq, Timestamp ts);
    // Returns the RTTs (ms) of segments of the opposite direction covered by `ack`.
    std::vector<double> on_ack(bool from_client, std::uint32_t ack, Timestamp ts);
    std::size_t open() const { return pending_[0].size() + pending_[1].size(); }

private:
    struct Entry {
        std::uint32_t end_seq;
        Timestamp sent;
        bool retransmitted;
    };
    std::vector<Entry> pending_[2];  // [0] client->server, [1] server->client
};

struct ConnectionKey {
    Ipv4Address client_ip;
    std::uint16_t client_port = 0;
    Ipv4Address server_ip;
    std::uint16_t server_port = 0;
    auto operator<=>(const ConnectionKey&) const = default;
};

struct ConnectionObject {
    ConnectionObject(ConnectionKey k, const rules::ChannelRule* rule, automata::State initial, bool synced);

    ConnectionKey key;
    const rules::ChannelRule* channel_rule;
    automata::Automaton mtu_automaton;
    automata::Automaton rtu_automaton;
    automata::SeqCounters mtu_counters;
    automata::SeqCounters rtu_counters;
    automata::ActivationLedger ledger;
    RttTracker rtt_tracker;
    StreamReassembler client_stream;
    StreamReassembler server_stream;
};

struct EngineOptions {
    bool assume_started = false;
    std::int64_t activation_deadline_ns = automata::ActivationLedger::kDefaultDeadlineNs;
    bool record_rtt = false;
};

// Operation checks, usable on their own.
std::vector<AlertDraft> check_datapoint(const iec104::Asdu& asdu, bool from_client, const ConnectionObject& conn,
                                        const RuleIndex& index);
std::optional<AlertDraft> check_setpoint(const iec104::InformationObject& obj, const rules::DatapointRule& rule);
std::optional<AlertDraft> check_rtt(ConnectionObject& conn, const PacketLayers& layers, bool from_client,
                                    Timestamp now, double max_rtt_ms, std::vector<double>* samples = nullptr);
std::optional<AlertDraft> check_protocol_window(gim::Protocol protocol, Timestamp ts,
                                                const rules::SpecificationBase& sb);

class Engine {
public:
    Engine(const rules::SpecificationBase& sb, EngineOptions options = {});

    InspectionReport inspect(const RawPacket& raw, std::uint64_t packet_index);

    std::size_t connection_count() const { return table_.size(); }
    const ConnectionObject* connection(const ConnectionKey& key) const;
    const std::vector<double>& rtt_samples() const { return rtt_samples_; }
    const RuleIndex& index() const { return index_; }

private:
    void inspect_connection(const PacketLayers& layers, const RuleIndex::ChannelMatch& match, const RawPacket& raw,
                            InspectionReport& report);
    void inspect_frame(ConnectionObject& conn, const iec104::Frame& frame, bool from_client, const RawPacket& raw,
                       InspectionReport& report);

    rules::SpecificationBase sb_;
    RuleIndex index_;
    EngineOptions options_;
    std::map<ConnectionKey, ConnectionObject> table_;
    std::vector<double> rtt_samples_;
};

// Shard used to keep every packet of one TCP connection on one worker.
std::size_t shard_of(const RawPacket& raw, std::size_t shards);

} // namespace gridwatch::engine
