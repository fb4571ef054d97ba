#pragma once

// Graph-based infrastructure model: assets, links and the data points they
// host. Loaded from a strict JSON document.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gridwatch/net.hpp"

namespace gridwatch::gim {

enum class AssetKind { MTU, RTU, IED, SWITCH, FIREWALL, DER, LOAD, SUBSTATION, WORKSTATION };
enum class Protocol { IEC104, SSH, MODBUS, OTHER };
enum class PortRole { Client, Server };
enum class Direction { Monitor, Control };
enum class EdgeKind { NetworkLink, CommChannel, PowerLine };

std::string to_string(AssetKind k);
std::string to_string(Protocol p);
std::string to_string(PortRole r);
std::string to_string(Direction d);
std::string to_string(EdgeKind k);
std::optional<AssetKind> parse_asset_kind(std::string_view s);
std::optional<Protocol> parse_protocol(std::string_view s);
std::optional<PortRole> parse_port_role(std::string_view s);
std::optional<Direction> parse_direction(std::string_view s);
std::optional<EdgeKind> parse_edge_kind(std::string_view s);

// MTU, RTU and IED must carry MAC and IP addresses.
bool is_addressable_kind(AssetKind k);
bool may_host_data_points(AssetKind k);

struct PortSpec {
    std::uint16_t port = 0;
    Protocol protocol = Protocol::OTHER;
    PortRole role = PortRole::Server;
    bool operator==(const PortSpec&) const = default;
};

struct DataPoint {
    std::uint32_t ioa = 0;
    std::uint16_t common_address = 0;
    std::uint8_t asdu_type = 0;
    Direction direction = Direction::Monitor;
    std::string unit;
    std::optional<double> min_value;
    std::optional<double> max_value;
    bool operator==(const DataPoint&) const = default;
};

struct OperatingLimits {
    double p_max_kw = 0;
    double q_max_kvar = 0;
    double cos_phi_min = -1;
    double cos_phi_max = 1;
    bool operator==(const OperatingLimits&) const = default;
};

struct AssetNode {
    std::string id;
    AssetKind kind = AssetKind::RTU;
    std::optional<MacAddress> mac;
    std::optional<Ipv4Address> ip;
    std::vector<PortSpec> ports;
    std::vector<DataPoint> data_points;
    std::optional<OperatingLimits> op_limits;
    bool operator==(const AssetNode&) const = default;
};

struct ChannelSpec {
    Protocol protocol = Protocol::IEC104;
    std::uint16_t server_port = 0;
    std::string client;
    std::string server;
    bool operator==(const ChannelSpec&) const = default;
};

struct Edge {
    std::string src;
    std::string dst;
    EdgeKind kind = EdgeKind::NetworkLink;
    std::optional<ChannelSpec> channel;
    bool operator==(const Edge&) const = default;
};

struct Meta {
    std::string model_id;
    std::string version;
    std::string created;
    bool operator==(const Meta&) const = default;
};

struct Gim {
    std::vector<AssetNode> nodes;
    std::vector<Edge> edges;
    Meta meta;

    const AssetNode* find(std::string_view id) const;
    bool operator==(const Gim&) const = default;
};

enum class DiagnosticKind { Schema, Referential, Invariant };

struct Diagnostic {
    DiagnosticKind kind = DiagnosticKind::Invariant;
    std::string subject;  // node id, edge label or JSON path
    std::string rule;
    bool operator==(const Diagnostic&) const = default;
};

std::string to_string(const Diagnostic& d);

class ModelError : public std::runtime_error {
public:
    explicit ModelError(Diagnostic d);
    Diagnostic diagnostic;
};

// Edge label used in diagnostics: "<KIND>:<src>-><dst>".
std::string edge_label(const Edge& edge);

// Checks every model invariant. Diagnostics are sorted, so the result does
// not depend on node or edge order in the source document.
std::vector<Diagnostic> validate_model(const Gim& gim);

// Parses and validates. Throws ModelError carrying the first diagnostic.
Gim load_model(std::string_view document);
Gim load_model_file(const std::string& path);

// Parses without semantic validation. Throws ModelError on schema errors.
Gim parse_model(std::string_view document);

std::string serialize_model(const Gim& gim);

} // namespace gridwatch::gim
