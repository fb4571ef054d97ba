#pragma once

// Specification base: the closed-world whitelist compiled from a GIM.
// Anything absent from it is illegitimate traffic.

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gridwatch/gim.hpp"

namespace gridwatch::rules {

enum class Domain { Communication, Asset, Operation };
enum class Operation { SendControl, SendMonitor };
enum class Weekday { Mon, Tue, Wed, Thu, Fri, Sat, Sun };

std::string to_string(Domain d);
std::string to_string(Operation o);
std::string to_string(Weekday d);

// Minutes since midnight.
struct TimeOfDay {
    int minutes = 0;
    static std::optional<TimeOfDay> parse(std::string_view hhmm);
    std::string str() const;
    auto operator<=>(const TimeOfDay&) const = default;
};

struct ProtocolWindow {
    gim::Protocol protocol = gim::Protocol::SSH;
    std::set<Weekday> weekdays;
    TimeOfDay start;
    TimeOfDay end;
    auto operator<=>(const ProtocolWindow&) const = default;
};

inline constexpr double kDefaultMaxRttMs = 200.0;

struct RuleConfig {
    std::set<gim::AssetKind> device_kinds_of_interest;
    double max_rtt_ms = kDefaultMaxRttMs;
    std::vector<ProtocolWindow> protocol_windows;
    std::set<Domain> emit_domains{Domain::Communication, Domain::Asset, Domain::Operation};
};

struct Endpoint {
    MacAddress mac;
    Ipv4Address ip;
    std::string node_id;
    auto operator<=>(const Endpoint&) const = default;
};

struct ChannelRule {
    Ipv4Address client_ip;
    Ipv4Address server_ip;
    std::uint16_t server_port = 0;
    gim::Protocol protocol = gim::Protocol::IEC104;
    auto operator<=>(const ChannelRule&) const = default;
};

struct DatapointKey {
    Ipv4Address server_ip;
    std::uint16_t common_address = 0;
    std::uint32_t ioa = 0;
    auto operator<=>(const DatapointKey&) const = default;
};

struct DatapointRule {
    std::uint8_t asdu_type = 0;
    gim::Direction direction = gim::Direction::Monitor;
    std::string unit;
    std::optional<double> min_value;
    std::optional<double> max_value;
    bool operator==(const DatapointRule&) const = default;
};

struct SpecificationBase {
    std::vector<Endpoint> endpoints;
    std::vector<ChannelRule> channels;
    std::map<DatapointKey, DatapointRule> datapoints;
    std::map<std::string, std::set<Operation>> role_ops;
    double max_rtt_ms = kDefaultMaxRttMs;
    std::vector<ProtocolWindow> protocol_windows;
    std::set<Domain> domains;
    std::string checksum;  // hex SHA-256 over the canonical document without this field

    bool enabled(Domain d) const { return domains.count(d) != 0; }
    bool operator==(const SpecificationBase&) const = default;
};

class RuleError : public std::runtime_error {
public:
    enum class Kind { Schema, ChecksumMismatch, Referential, EmptySpecification, Config };
    RuleError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
    Kind kind;
};

RuleConfig load_config(std::string_view document);
RuleConfig load_config_file(const std::string& path);
std::string serialize_config(const RuleConfig& config);

SpecificationBase generate_rules(const gim::Gim& gim, const RuleConfig& config);

// Canonical JSON: sorted keys, sorted entries, trailing newline, checksum included.
std::string export_rules(const SpecificationBase& sb);
SpecificationBase import_rules(std::string_view document);
SpecificationBase import_rules_file(const std::string& path);

// Checksum over every rule entry, as written by export_rules.
std::string compute_checksum(const SpecificationBase& sb);
std::string sha256_hex(std::string_view data);

} // namespace gridwatch::rules
