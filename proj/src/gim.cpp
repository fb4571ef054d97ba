#include "gridwatch/gim.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json_util.hpp"

namespace gridwatch::gim {

using detail::json;
using detail::SchemaViolation;

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::pair<E, std::string_view> (&table)[N], std::string_view s) {
    for (const auto& [value, name] : table)
        if (name == s) return value;
    return std::nullopt;
}

template <typename E, std::size_t N>
std::string name_of(const std::pair<E, std::string_view> (&table)[N], E e) {
    for (const auto& [value, name] : table)
        if (value == e) return std::string(name);
    return "?";
}

constexpr std::pair<AssetKind, std::string_view> kAssetKinds[] = {
    {AssetKind::MTU, "MTU"},           {AssetKind::RTU, "RTU"},   {AssetKind::IED, "IED"},
    {AssetKind::SWITCH, "SWITCH"},     {AssetKind::FIREWALL, "FIREWALL"},
    {AssetKind::DER, "DER"},           {AssetKind::LOAD, "LOAD"}, {AssetKind::SUBSTATION, "SUBSTATION"},
    {AssetKind::WORKSTATION, "WORKSTATION"},
};
constexpr std::pair<Protocol, std::string_view> kProtocols[] = {
    {Protocol::IEC104, "IEC104"}, {Protocol::SSH, "SSH"}, {Protocol::MODBUS, "MODBUS"}, {Protocol::OTHER, "OTHER"}};
constexpr std::pair<PortRole, std::string_view> kPortRoles[] = {{PortRole::Client, "client"},
                                                                {PortRole::Server, "server"}};
constexpr std::pair<Direction, std::string_view> kDirections[] = {{Direction::Monitor, "MONITOR"},
                                                                  {Direction::Control, "CONTROL"}};
constexpr std::pair<EdgeKind, std::string_view> kEdgeKinds[] = {{EdgeKind::NetworkLink, "NETWORK_LINK"},
                                                                {EdgeKind::CommChannel, "COMM_CHANNEL"},
                                                                {EdgeKind::PowerLine, "POWER_LINE"}};

template <typename E, std::size_t N>
E get_enum(const json& obj, std::string_view key, const std::string& path,
           const std::pair<E, std::string_view> (&table)[N]) {
    const std::string s = detail::get_string(obj, key, path);
    auto v = lookup(table, s);
    if (!v) throw SchemaViolation(detail::child(path, key), "unknown value \"" + s + "\"");
    return *v;
}

DataPoint parse_data_point(const json& j, const std::string& path) {
    detail::check_keys(j, path, {"ioa", "common_address", "asdu_type", "direction", "unit"},
                       {"min_value", "max_value"});
    DataPoint dp;
    dp.ioa = static_cast<std::uint32_t>(detail::get_uint(j, "ioa", path, 0xFFFFFF));
    dp.common_address = static_cast<std::uint16_t>(detail::get_uint(j, "common_address", path, 0xFFFF));
    dp.asdu_type = static_cast<std::uint8_t>(detail::get_uint(j, "asdu_type", path, 0xFF));
    dp.direction = get_enum(j, "direction", path, kDirections);
    dp.unit = detail::get_string(j, "unit", path);
    if (j.contains("min_value")) dp.min_value = detail::get_number(j, "min_value", path);
    if (j.contains("max_value")) dp.max_value = detail::get_number(j, "max_value", path);
    return dp;
}

AssetNode parse_node(const json& j, const std::string& path) {
    detail::check_keys(j, path, {"id", "kind"}, {"mac", "ip", "ports", "data_points", "op_limits"});
    AssetNode node;
    node.id = detail::get_string(j, "id", path);
    if (node.id.empty()) throw SchemaViolation(detail::child(path, "id"), "empty node id");
    node.kind = get_enum(j, "kind", path, kAssetKinds);
    if (j.contains("mac")) {
        auto mac = MacAddress::parse(detail::get_string(j, "mac", path));
        if (!mac) throw SchemaViolation(detail::child(path, "mac"), "malformed MAC address");
        node.mac = *mac;
    }
    if (j.contains("ip")) {
        auto ip = Ipv4Address::parse(detail::get_string(j, "ip", path));
        if (!ip) throw SchemaViolation(detail::child(path, "ip"), "malformed IPv4 address");
        node.ip = *ip;
    }
    if (j.contains("ports")) {
        const auto ports_path = detail::child(path, "ports");
        const json& ports = detail::require_array(j.at("ports"), ports_path);
        for (std::size_t i = 0; i < ports.size(); ++i) {
            const auto p = detail::child(ports_path, i);
            detail::check_keys(ports[i], p, {"port", "protocol", "role"});
            node.ports.push_back(PortSpec{static_cast<std::uint16_t>(detail::get_uint(ports[i], "port", p, 0xFFFF)),
                                          get_enum(ports[i], "protocol", p, kProtocols),
                                          get_enum(ports[i], "role", p, kPortRoles)});
        }
    }
    if (j.contains("data_points")) {
        const auto dps_path = detail::child(path, "data_points");
        const json& dps = detail::require_array(j.at("data_points"), dps_path);
        for (std::size_t i = 0; i < dps.size(); ++i)
            node.data_points.push_back(parse_data_point(dps[i], detail::child(dps_path, i)));
    }
    if (j.contains("op_limits")) {
        const auto p = detail::child(path, "op_limits");
        detail::check_keys(j.at("op_limits"), p, {"p_max_kw", "q_max_kvar", "cos_phi_min", "cos_phi_max"});
        const json& lim = j.at("op_limits");
        node.op_limits = OperatingLimits{detail::get_number(lim, "p_max_kw", p), detail::get_number(lim, "q_max_kvar", p),
                                         detail::get_number(lim, "cos_phi_min", p),
                                         detail::get_number(lim, "cos_phi_max", p)};
    }
    return node;
}

Edge parse_edge(const json& j, const std::string& path) {
    detail::check_keys(j, path, {"src", "dst", "kind"}, {"channel"});
    Edge edge;
    edge.src = detail::get_string(j, "src", path);
    edge.dst = detail::get_string(j, "dst", path);
    edge.kind = get_enum(j, "kind", path, kEdgeKinds);
    if (j.contains("channel")) {
        const auto p = detail::child(path, "channel");
        const json& c = j.at("channel");
        detail::check_keys(c, p, {"protocol", "server_port", "client", "server"});
        edge.channel = ChannelSpec{get_enum(c, "protocol", p, kProtocols),
                                   static_cast<std::uint16_t>(detail::get_uint(c, "server_port", p, 0xFFFF)),
                                   detail::get_string(c, "client", p), detail::get_string(c, "server", p)};
    }
    return edge;
}

void add(std::vector<Diagnostic>& out, DiagnosticKind kind, std::string subject, std::string rule) {
    out.push_back(Diagnostic{kind, std::move(subject), std::move(rule)});
}

} // namespace

std::string to_string(AssetKind k) { return name_of(kAssetKinds, k); }
std::string to_string(Protocol p) { return name_of(kProtocols, p); }
std::string to_string(PortRole r) { return name_of(kPortRoles, r); }
std::string to_string(Direction d) { return name_of(kDirections, d); }
std::string to_string(EdgeKind k) { return name_of(kEdgeKinds, k); }
std::optional<AssetKind> parse_asset_kind(std::string_view s) { return lookup(kAssetKinds, s); }
std::optional<Protocol> parse_protocol(std::string_view s) { return lookup(kProtocols, s); }
std::optional<PortRole> parse_port_role(std::string_view s) { return lookup(kPortRoles, s); }
std::optional<Direction> parse_direction(std::string_view s) { return lookup(kDirections, s); }
std::optional<EdgeKind> parse_edge_kind(std::string_view s) { return lookup(kEdgeKinds, s); }

bool is_addressable_kind(AssetKind k) { return k == AssetKind::MTU || k == AssetKind::RTU || k == AssetKind::IED; }
bool may_host_data_points(AssetKind k) { return k == AssetKind::RTU || k == AssetKind::IED || k == AssetKind::DER; }

const AssetNode* Gim::find(std::string_view id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

std::string to_string(const Diagnostic& d) {
    const char* kind = d.kind == DiagnosticKind::Schema        ? "SchemaError"
                       : d.kind == DiagnosticKind::Referential ? "ReferentialError"
                                                               : "InvariantError";
    return std::string(kind) + "(" + d.subject + ", \"" + d.rule + "\")";
}

ModelError::ModelError(Diagnostic d) : std::runtime_error(to_string(d)), diagnostic(std::move(d)) {}

std::string edge_label(const Edge& edge) { return to_string(edge.kind) + ":" + edge.src + "->" + edge.dst; }

std::vector<Diagnostic> validate_model(const Gim& gim) {
    std::vector<Diagnostic> out;
    std::map<std::string, int> id_count;
    std::map<MacAddress, int> mac_count;
    std::map<Ipv4Address, int> ip_count;
    for (const auto& n : gim.nodes) {
        ++id_count[n.id];
        if (n.mac) ++mac_count[*n.mac];
        if (n.ip) ++ip_count[*n.ip];
    }
    for (const auto& [id, count] : id_count)
        if (count > 1) add(out, DiagnosticKind::Invariant, id, "unique-node-id");

    for (const auto& n : gim.nodes) {
        if (is_addressable_kind(n.kind)) {
            if (!n.mac) add(out, DiagnosticKind::Invariant, n.id, "addressable-asset-needs-mac");
            if (!n.ip) add(out, DiagnosticKind::Invariant, n.id, "addressable-asset-needs-ip");
        }
        if ((n.mac && mac_count[*n.mac] > 1) || (n.ip && ip_count[*n.ip] > 1))
            add(out, DiagnosticKind::Invariant, n.id, "unique-address");
        if (!n.data_points.empty() && !may_host_data_points(n.kind))
            add(out, DiagnosticKind::Invariant, n.id, "data-points-only-on-field-devices");
        if (n.op_limits) {
            const auto& l = *n.op_limits;
            if (l.cos_phi_min < -1 || l.cos_phi_max > 1 || l.cos_phi_min > l.cos_phi_max)
                add(out, DiagnosticKind::Invariant, n.id, "cos-phi-bounds");
            if (l.p_max_kw < 0 || l.q_max_kvar < 0)
                add(out, DiagnosticKind::Invariant, n.id, "operating-limits-non-negative");
        }
        std::set<std::pair<std::uint32_t, std::uint16_t>> seen;
        std::set<std::pair<std::uint32_t, std::uint16_t>> reported;
        for (const auto& dp : n.data_points) {
            const auto key = std::make_pair(dp.ioa, dp.common_address);
            if (!seen.insert(key).second && reported.insert(key).second)
                add(out, DiagnosticKind::Invariant, n.id, "unique-data-point-address");
            const bool type_ok = dp.direction == Direction::Monitor ? dp.asdu_type > 0 && dp.asdu_type < 45
                                                                    : dp.asdu_type >= 45 && dp.asdu_type <= 69;
            if (!type_ok) add(out, DiagnosticKind::Invariant, n.id, "data-point-type-matches-direction");
            if (dp.min_value && dp.max_value && *dp.min_value > *dp.max_value)
                add(out, DiagnosticKind::Invariant, n.id, "data-point-min-max");
        }
    }

    for (const auto& e : gim.edges) {
        const std::string label = edge_label(e);
        if (!id_count.count(e.src) || !id_count.count(e.dst))
            add(out, DiagnosticKind::Referential, label, "edge-endpoint-exists");
        if (e.kind == EdgeKind::CommChannel) {
            if (!e.channel) {
                add(out, DiagnosticKind::Invariant, label, "comm-channel-needs-descriptor");
                continue;
            }
            const auto& c = *e.channel;
            if (!id_count.count(c.client) || !id_count.count(c.server))
                add(out, DiagnosticKind::Referential, label, "channel-endpoint-exists");
            const bool matches = (c.client == e.src && c.server == e.dst) || (c.client == e.dst && c.server == e.src);
            if (!matches || c.client == c.server)
                add(out, DiagnosticKind::Invariant, label, "channel-endpoints-match-edge");
        } else if (e.channel) {
            add(out, DiagnosticKind::Invariant, label, "channel-only-on-comm-edges");
        }
    }

    std::sort(out.begin(), out.end(), [](const Diagnostic& a, const Diagnostic& b) {
        return std::tie(a.kind, a.subject, a.rule) < std::tie(b.kind, b.subject, b.rule);
    });
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Gim parse_model(std::string_view document) {
    try {
        const json root = detail::parse_document(document);
        detail::check_keys(root, "$", {"meta", "nodes", "edges"});
        Gim gim;
        const json& meta = root.at("meta");
        detail::check_keys(meta, "$.meta", {"model_id", "version", "created"});
        gim.meta = Meta{detail::get_string(meta, "model_id", "$.meta"), detail::get_string(meta, "version", "$.meta"),
                        detail::get_string(meta, "created", "$.meta")};
        const json& nodes = detail::require_array(root.at("nodes"), "$.nodes");
        for (std::size_t i = 0; i < nodes.size(); ++i)
            gim.nodes.push_back(parse_node(nodes[i], detail::child("$.nodes", i)));
        const json& edges = detail::require_array(root.at("edges"), "$.edges");
        for (std::size_t i = 0; i < edges.size(); ++i)
            gim.edges.push_back(parse_edge(edges[i], detail::child("$.edges", i)));
        return gim;
    } catch (const SchemaViolation& e) {
        throw ModelError(Diagnostic{DiagnosticKind::Schema, e.path, e.what()});
    }
}

Gim load_model(std::string_view document) {
    Gim gim = parse_model(document);
    auto diags = validate_model(gim);
    if (!diags.empty()) throw ModelError(diags.front());
    return gim;
}

Gim load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError(Diagnostic{DiagnosticKind::Schema, path, "cannot open file"});
    std::stringstream buf;
    buf << in.rdbuf();
    return load_model(buf.str());
}

std::string serialize_model(const Gim& gim) {
    json root;
    root["meta"] = {{"model_id", gim.meta.model_id}, {"version", gim.meta.version}, {"created", gim.meta.created}};
    root["nodes"] = json::array();
    for (const auto& n : gim.nodes) {
        json j;
        j["id"] = n.id;
        j["kind"] = to_string(n.kind);
        if (n.mac) j["mac"] = n.mac->str();
        if (n.ip) j["ip"] = n.ip->str();
        j["ports"] = json::array();
        for (const auto& p : n.ports)
            j["ports"].push_back({{"port", p.port}, {"protocol", to_string(p.protocol)}, {"role", to_string(p.role)}});
        j["data_points"] = json::array();
        for (const auto& dp : n.data_points) {
            json d{{"ioa", dp.ioa},
                   {"common_address", dp.common_address},
                   {"asdu_type", dp.asdu_type},
                   {"direction", to_string(dp.direction)},
                   {"unit", dp.unit}};
            if (dp.min_value) d["min_value"] = *dp.min_value;
            if (dp.max_value) d["max_value"] = *dp.max_value;
            j["data_points"].push_back(std::move(d));
        }
        if (n.op_limits)
            j["op_limits"] = {{"p_max_kw", n.op_limits->p_max_kw},
                              {"q_max_kvar", n.op_limits->q_max_kvar},
                              {"cos_phi_min", n.op_limits->cos_phi_min},
                              {"cos_phi_max", n.op_limits->cos_phi_max}};
        root["nodes"].push_back(std::move(j));
    }
    root["edges"] = json::array();
    for (const auto& e : gim.edges) {
        json j{{"src", e.src}, {"dst", e.dst}, {"kind", to_string(e.kind)}};
        if (e.channel)
            j["channel"] = {{"protocol", to_string(e.channel->protocol)},
                            {"server_port", e.channel->server_port},
                            {"client", e.channel->client},
                            {"server", e.channel->server}};
        root["edges"].push_back(std::move(j));
    }
    return root.dump(2) + "\n";
}

} // namespace gridwatch::gim
