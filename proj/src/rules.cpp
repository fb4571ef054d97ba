#include "gridwatch/rules.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "json_util.hpp"

namespace gridwatch::rules {

using detail::json;
using detail::SchemaViolation;

namespace {

constexpr std::string_view kFormat = "gridwatch-rules/1";

constexpr std::pair<Domain, std::string_view> kDomains[] = {
    {Domain::Communication, "COMMUNICATION"}, {Domain::Asset, "ASSET"}, {Domain::Operation, "OPERATION"}};
constexpr std::pair<Operation, std::string_view> kOperations[] = {{Operation::SendControl, "send-control"},
                                                                  {Operation::SendMonitor, "send-monitor"}};
constexpr std::pair<Weekday, std::string_view> kWeekdays[] = {
    {Weekday::Mon, "MON"}, {Weekday::Tue, "TUE"}, {Weekday::Wed, "WED"}, {Weekday::Thu, "THU"},
    {Weekday::Fri, "FRI"}, {Weekday::Sat, "SAT"}, {Weekday::Sun, "SUN"}};

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

template <typename E, std::size_t N>
E parse_enum_value(const json& v, const std::string& path, const std::pair<E, std::string_view> (&table)[N]) {
    if (!v.is_string()) throw SchemaViolation(path, "expected a string");
    auto e = lookup(table, v.get<std::string>());
    if (!e) throw SchemaViolation(path, "unknown value \"" + v.get<std::string>() + "\"");
    return *e;
}

gim::Protocol parse_protocol_value(const json& v, const std::string& path) {
    if (!v.is_string()) throw SchemaViolation(path, "expected a string");
    auto p = gim::parse_protocol(v.get<std::string>());
    if (!p) throw SchemaViolation(path, "unknown protocol \"" + v.get<std::string>() + "\"");
    return *p;
}

Ipv4Address parse_ip_field(const json& obj, std::string_view key, const std::string& path) {
    auto ip = Ipv4Address::parse(detail::get_string(obj, key, path));
    if (!ip) throw SchemaViolation(detail::child(path, key), "malformed IPv4 address");
    return *ip;
}

ProtocolWindow parse_window(const json& j, const std::string& path) {
    detail::check_keys(j, path, {"protocol", "weekdays", "start_time", "end_time"});
    ProtocolWindow w;
    w.protocol = parse_protocol_value(j.at("protocol"), detail::child(path, "protocol"));
    const auto days_path = detail::child(path, "weekdays");
    const json& days = detail::require_array(j.at("weekdays"), days_path);
    for (std::size_t i = 0; i < days.size(); ++i)
        w.weekdays.insert(parse_enum_value(days[i], detail::child(days_path, i), kWeekdays));
    auto start = TimeOfDay::parse(detail::get_string(j, "start_time", path));
    auto end = TimeOfDay::parse(detail::get_string(j, "end_time", path));
    if (!start) throw SchemaViolation(detail::child(path, "start_time"), "expected HH:MM");
    if (!end) throw SchemaViolation(detail::child(path, "end_time"), "expected HH:MM");
    if (!(*start < *end)) throw SchemaViolation(path, "start_time must precede end_time");
    if (w.weekdays.empty()) throw SchemaViolation(days_path, "at least one weekday required");
    w.start = *start;
    w.end = *end;
    return w;
}

json window_json(const ProtocolWindow& w) {
    json days = json::array();
    for (auto d : w.weekdays) days.push_back(to_string(d));
    return json{{"protocol", gim::to_string(w.protocol)},
                {"weekdays", days},
                {"start_time", w.start.str()},
                {"end_time", w.end.str()}};
}

json body_json(const SpecificationBase& sb) {
    json root;
    root["format"] = kFormat;
    json domains = json::array();
    for (auto d : sb.domains) domains.push_back(to_string(d));
    std::sort(domains.begin(), domains.end());
    root["domains"] = domains;

    auto endpoints = sb.endpoints;
    std::sort(endpoints.begin(), endpoints.end(),
              [](const Endpoint& a, const Endpoint& b) { return a.node_id < b.node_id; });
    root["endpoints"] = json::array();
    for (const auto& e : endpoints)
        root["endpoints"].push_back({{"mac", e.mac.str()}, {"ip", e.ip.str()}, {"node_id", e.node_id}});

    auto channels = sb.channels;
    std::sort(channels.begin(), channels.end());
    root["channels"] = json::array();
    for (const auto& c : channels)
        root["channels"].push_back({{"client_ip", c.client_ip.str()},
                                    {"server_ip", c.server_ip.str()},
                                    {"server_port", c.server_port},
                                    {"protocol", gim::to_string(c.protocol)}});

    root["datapoints"] = json::array();
    for (const auto& [key, rule] : sb.datapoints) {
        json d{{"server_ip", key.server_ip.str()},
               {"common_address", key.common_address},
               {"ioa", key.ioa},
               {"asdu_type", rule.asdu_type},
               {"direction", gim::to_string(rule.direction)},
               {"unit", rule.unit}};
        if (rule.min_value) d["min_value"] = *rule.min_value;
        if (rule.max_value) d["max_value"] = *rule.max_value;
        root["datapoints"].push_back(std::move(d));
    }

    root["role_ops"] = json::object();
    for (const auto& [node, ops] : sb.role_ops) {
        json list = json::array();
        for (auto op : ops) list.push_back(to_string(op));
        root["role_ops"][node] = list;
    }
    root["max_rtt_ms"] = sb.max_rtt_ms;
    auto windows = sb.protocol_windows;
    std::sort(windows.begin(), windows.end());
    root["protocol_windows"] = json::array();
    for (const auto& w : windows) root["protocol_windows"].push_back(window_json(w));
    return root;
}

// Fallback setpoint bounds from the hosting asset's ratings, keyed by unit.
void apply_asset_limits(DatapointRule& rule, const gim::AssetNode& node) {
    if (rule.min_value && rule.max_value) return;
    std::optional<std::pair<double, double>> bounds;
    if (rule.unit == "cos_phi") {
        bounds = node.op_limits ? std::make_pair(node.op_limits->cos_phi_min, node.op_limits->cos_phi_max)
                                : std::make_pair(-1.0, 1.0);
    } else if (node.op_limits && rule.unit == "kW") {
        bounds = std::make_pair(-node.op_limits->p_max_kw, node.op_limits->p_max_kw);
    } else if (node.op_limits && rule.unit == "kvar") {
        bounds = std::make_pair(-node.op_limits->q_max_kvar, node.op_limits->q_max_kvar);
    }
    if (!bounds) return;
    if (!rule.min_value) rule.min_value = bounds->first;
    if (!rule.max_value) rule.max_value = bounds->second;
}

void check_referential(const SpecificationBase& sb) {
    std::set<Ipv4Address> ips;
    std::set<std::string> nodes;
    for (const auto& e : sb.endpoints) {
        if (!ips.insert(e.ip).second) throw RuleError(RuleError::Kind::Referential, "duplicate endpoint ip " + e.ip.str());
        if (!nodes.insert(e.node_id).second)
            throw RuleError(RuleError::Kind::Referential, "duplicate endpoint node " + e.node_id);
    }
    std::set<Ipv4Address> servers;
    for (const auto& c : sb.channels) {
        if (!ips.count(c.client_ip) || !ips.count(c.server_ip))
            throw RuleError(RuleError::Kind::Referential,
                            "channel " + c.client_ip.str() + "->" + c.server_ip.str() + " references unknown endpoint");
        servers.insert(c.server_ip);
    }
    for (const auto& [key, rule] : sb.datapoints) {
        if (!servers.count(key.server_ip))
            throw RuleError(RuleError::Kind::Referential,
                            "datapoint server " + key.server_ip.str() + " is not a channel server");
        if (rule.min_value && rule.max_value && *rule.min_value > *rule.max_value)
            throw RuleError(RuleError::Kind::Referential, "datapoint bounds inverted for ioa " + std::to_string(key.ioa));
    }
    for (const auto& [node, ops] : sb.role_ops)
        if (!nodes.count(node))
            throw RuleError(RuleError::Kind::Referential, "role_ops references unknown node " + node);
    if (!(sb.max_rtt_ms > 0)) throw RuleError(RuleError::Kind::Referential, "max_rtt_ms must be positive");
}

SpecificationBase parse_rules(const json& root) {
    const std::string r = "$";
    detail::check_keys(root, r,
                       {"format", "domains", "endpoints", "channels", "datapoints", "role_ops", "max_rtt_ms",
                        "protocol_windows", "checksum"});
    if (detail::get_string(root, "format", r) != kFormat)
        throw SchemaViolation("$.format", "unsupported rule document format");
    SpecificationBase sb;
    const json& domains = detail::require_array(root.at("domains"), "$.domains");
    for (std::size_t i = 0; i < domains.size(); ++i)
        sb.domains.insert(parse_enum_value(domains[i], detail::child("$.domains", i), kDomains));

    const json& endpoints = detail::require_array(root.at("endpoints"), "$.endpoints");
    for (std::size_t i = 0; i < endpoints.size(); ++i) {
        const auto p = detail::child("$.endpoints", i);
        detail::check_keys(endpoints[i], p, {"mac", "ip", "node_id"});
        auto mac = MacAddress::parse(detail::get_string(endpoints[i], "mac", p));
        if (!mac) throw SchemaViolation(detail::child(p, "mac"), "malformed MAC address");
        sb.endpoints.push_back(Endpoint{*mac, parse_ip_field(endpoints[i], "ip", p),
                                        detail::get_string(endpoints[i], "node_id", p)});
    }
    const json& channels = detail::require_array(root.at("channels"), "$.channels");
    for (std::size_t i = 0; i < channels.size(); ++i) {
        const auto p = detail::child("$.channels", i);
        detail::check_keys(channels[i], p, {"client_ip", "server_ip", "server_port", "protocol"});
        sb.channels.push_back(ChannelRule{parse_ip_field(channels[i], "client_ip", p),
                                          parse_ip_field(channels[i], "server_ip", p),
                                          static_cast<std::uint16_t>(detail::get_uint(channels[i], "server_port", p, 0xFFFF)),
                                          parse_protocol_value(channels[i].at("protocol"), detail::child(p, "protocol"))});
    }
    const json& dps = detail::require_array(root.at("datapoints"), "$.datapoints");
    for (std::size_t i = 0; i < dps.size(); ++i) {
        const auto p = detail::child("$.datapoints", i);
        const json& d = dps[i];
        detail::check_keys(d, p, {"server_ip", "common_address", "ioa", "asdu_type", "direction", "unit"},
                           {"min_value", "max_value"});
        DatapointKey key{parse_ip_field(d, "server_ip", p),
                         static_cast<std::uint16_t>(detail::get_uint(d, "common_address", p, 0xFFFF)),
                         static_cast<std::uint32_t>(detail::get_uint(d, "ioa", p, 0xFFFFFF))};
        DatapointRule rule;
        rule.asdu_type = static_cast<std::uint8_t>(detail::get_uint(d, "asdu_type", p, 0xFF));
        auto dir = gim::parse_direction(detail::get_string(d, "direction", p));
        if (!dir) throw SchemaViolation(detail::child(p, "direction"), "unknown direction");
        rule.direction = *dir;
        rule.unit = detail::get_string(d, "unit", p);
        if (d.contains("min_value")) rule.min_value = detail::get_number(d, "min_value", p);
        if (d.contains("max_value")) rule.max_value = detail::get_number(d, "max_value", p);
        if (!sb.datapoints.emplace(key, rule).second) throw SchemaViolation(p, "duplicate datapoint key");
    }
    const json& role_ops = detail::require_object(root.at("role_ops"), "$.role_ops");
    for (auto it = role_ops.begin(); it != role_ops.end(); ++it) {
        const auto p = detail::child("$.role_ops", it.key());
        const json& ops = detail::require_array(it.value(), p);
        auto& set = sb.role_ops[it.key()];
        for (std::size_t i = 0; i < ops.size(); ++i) set.insert(parse_enum_value(ops[i], detail::child(p, i), kOperations));
    }
    sb.max_rtt_ms = detail::get_number(root, "max_rtt_ms", r);
    const json& windows = detail::require_array(root.at("protocol_windows"), "$.protocol_windows");
    for (std::size_t i = 0; i < windows.size(); ++i)
        sb.protocol_windows.push_back(parse_window(windows[i], detail::child("$.protocol_windows", i)));
    sb.checksum = detail::get_string(root, "checksum", r);

    std::sort(sb.endpoints.begin(), sb.endpoints.end(),
              [](const Endpoint& a, const Endpoint& b) { return a.node_id < b.node_id; });
    std::sort(sb.channels.begin(), sb.channels.end());
    std::sort(sb.protocol_windows.begin(), sb.protocol_windows.end());
    return sb;
}

std::string read_file(const std::string& path, RuleError::Kind kind) {
    std::ifstream in(path);
    if (!in) throw RuleError(kind, "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

std::string to_string(Domain d) { return name_of(kDomains, d); }
std::string to_string(Operation o) { return name_of(kOperations, o); }
std::string to_string(Weekday d) { return name_of(kWeekdays, d); }

std::optional<TimeOfDay> TimeOfDay::parse(std::string_view s) {
    if (s.size() != 5 || s[2] != ':') return std::nullopt;
    int h = 0, m = 0;
    auto r1 = std::from_chars(s.data(), s.data() + 2, h);
    auto r2 = std::from_chars(s.data() + 3, s.data() + 5, m);
    if (r1.ec != std::errc{} || r1.ptr != s.data() + 2 || r2.ec != std::errc{} || r2.ptr != s.data() + 5)
        return std::nullopt;
    // 24:00 is accepted as an end-of-day bound.
    if (h < 0 || m < 0 || m > 59 || h > 24 || (h == 24 && m != 0)) return std::nullopt;
    return TimeOfDay{h * 60 + m};
}

std::string TimeOfDay::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d", minutes / 60, minutes % 60);
    return buf;
}

RuleConfig load_config(std::string_view document) {
    try {
        const json root = detail::parse_document(document);
        detail::check_keys(root, "$", {"device_kinds_of_interest"}, {"max_rtt_ms", "protocol_windows", "emit_domains"});
        RuleConfig cfg;
        const json& kinds = detail::require_array(root.at("device_kinds_of_interest"), "$.device_kinds_of_interest");
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            const auto p = detail::child("$.device_kinds_of_interest", i);
            if (!kinds[i].is_string()) throw SchemaViolation(p, "expected a string");
            auto k = gim::parse_asset_kind(kinds[i].get<std::string>());
            if (!k) throw SchemaViolation(p, "unknown asset kind");
            cfg.device_kinds_of_interest.insert(*k);
        }
        if (root.contains("max_rtt_ms")) {
            cfg.max_rtt_ms = detail::get_number(root, "max_rtt_ms", "$");
            if (!(cfg.max_rtt_ms > 0)) throw SchemaViolation("$.max_rtt_ms", "must be positive");
        }
        if (root.contains("protocol_windows")) {
            const json& windows = detail::require_array(root.at("protocol_windows"), "$.protocol_windows");
            for (std::size_t i = 0; i < windows.size(); ++i)
                cfg.protocol_windows.push_back(parse_window(windows[i], detail::child("$.protocol_windows", i)));
        }
        if (root.contains("emit_domains")) {
            cfg.emit_domains.clear();
            const json& domains = detail::require_array(root.at("emit_domains"), "$.emit_domains");
            for (std::size_t i = 0; i < domains.size(); ++i)
                cfg.emit_domains.insert(parse_enum_value(domains[i], detail::child("$.emit_domains", i), kDomains));
        }
        return cfg;
    } catch (const SchemaViolation& e) {
        throw RuleError(RuleError::Kind::Config, std::string("config schema error at ") + e.what());
    }
}

RuleConfig load_config_file(const std::string& path) { return load_config(read_file(path, RuleError::Kind::Config)); }

std::string serialize_config(const RuleConfig& cfg) {
    json root;
    root["device_kinds_of_interest"] = json::array();
    for (auto k : cfg.device_kinds_of_interest) root["device_kinds_of_interest"].push_back(gim::to_string(k));
    root["max_rtt_ms"] = cfg.max_rtt_ms;
    root["protocol_windows"] = json::array();
    for (const auto& w : cfg.protocol_windows) root["protocol_windows"].push_back(window_json(w));
    root["emit_domains"] = json::array();
    for (auto d : cfg.emit_domains) root["emit_domains"].push_back(to_string(d));
    return root.dump(2) + "\n";
}

SpecificationBase generate_rules(const gim::Gim& model, const RuleConfig& config) {
    SpecificationBase sb;
    sb.max_rtt_ms = config.max_rtt_ms;
    sb.protocol_windows = config.protocol_windows;
    std::sort(sb.protocol_windows.begin(), sb.protocol_windows.end());
    sb.domains = config.emit_domains;

    auto of_interest = [&](const gim::AssetNode* n) {
        return n && config.device_kinds_of_interest.count(n->kind) && n->mac && n->ip;
    };
    for (const auto& n : model.nodes)
        if (of_interest(&n)) sb.endpoints.push_back(Endpoint{*n.mac, *n.ip, n.id});
    if (sb.endpoints.empty())
        throw RuleError(RuleError::Kind::EmptySpecification, "no addressable node matches device_kinds_of_interest");

    std::set<std::string> server_nodes;
    for (const auto& e : model.edges) {
        if (e.kind != gim::EdgeKind::CommChannel || !e.channel) continue;
        const auto* client = model.find(e.channel->client);
        const auto* server = model.find(e.channel->server);
        if (!of_interest(client) || !of_interest(server)) continue;
        sb.channels.push_back(ChannelRule{*client->ip, *server->ip, e.channel->server_port, e.channel->protocol});
        server_nodes.insert(server->id);
        if (e.channel->protocol == gim::Protocol::IEC104) {
            sb.role_ops[client->id].insert(Operation::SendControl);
            sb.role_ops[server->id].insert(Operation::SendMonitor);
        }
    }
    for (const auto& ep : sb.endpoints) sb.role_ops.try_emplace(ep.node_id);

    for (const auto& n : model.nodes) {
        if (!of_interest(&n) || !server_nodes.count(n.id)) continue;
        for (const auto& dp : n.data_points) {
            DatapointRule rule{dp.asdu_type, dp.direction, dp.unit, dp.min_value, dp.max_value};
            if (dp.direction == gim::Direction::Control) apply_asset_limits(rule, n);
            sb.datapoints.emplace(DatapointKey{*n.ip, dp.common_address, dp.ioa}, std::move(rule));
        }
    }

    std::sort(sb.endpoints.begin(), sb.endpoints.end(),
              [](const Endpoint& a, const Endpoint& b) { return a.node_id < b.node_id; });
    std::sort(sb.channels.begin(), sb.channels.end());
    sb.channels.erase(std::unique(sb.channels.begin(), sb.channels.end()), sb.channels.end());
    sb.checksum = compute_checksum(sb);
    return sb;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string compute_checksum(const SpecificationBase& sb) { return sha256_hex(body_json(sb).dump()); }

std::string export_rules(const SpecificationBase& sb) {
    json root = body_json(sb);
    root["checksum"] = sha256_hex(root.dump());
    return root.dump(2) + "\n";
}

SpecificationBase import_rules(std::string_view document) {
    SpecificationBase sb;
    json root;
    try {
        root = detail::parse_document(document);
        sb = parse_rules(root);
    } catch (const SchemaViolation& e) {
        throw RuleError(RuleError::Kind::Schema, std::string("rule schema error at ") + e.what());
    }
    root.erase("checksum");
    const std::string actual = sha256_hex(root.dump());
    if (actual != sb.checksum)
        throw RuleError(RuleError::Kind::ChecksumMismatch,
                        "rule checksum mismatch: stored " + sb.checksum + ", computed " + actual);
    check_referential(sb);
    return sb;
}

SpecificationBase import_rules_file(const std::string& path) {
    return import_rules(read_file(path, RuleError::Kind::Schema));
}

} // namespace gridwatch::rules
