#include "gridwatch/alerting.hpp"

#include <chrono>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace gridwatch::alerting {

namespace {

constexpr std::string_view kTypeNames[] = {
    "IP_MISMATCH",        "MAC_MISMATCH",       "PORT_MISMATCH",        "NO_SUCH_CONNECTION",
    "DATAPOINT_MISMATCH", "TYPE_MISMATCH",      "INVALID_OPERATION",    "INVALID_SETPOINT",
    "SEQUENCE_VIOLATION", "AUTOMATA_VIOLATION", "RTT_EXCEEDED",         "PROTOCOL_NOT_ALLOWED",
    "TIME_WINDOW_VIOLATION", "MALFORMED_PACKET",
};
static_assert(std::size(kTypeNames) == kAlertTypeCount);

constexpr std::string_view kLevelNames[] = {"low", "medium", "high"};

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

} // namespace

std::string to_string(AlertType t) { return std::string(kTypeNames[static_cast<std::size_t>(t)]); }
std::string to_string(ThreatLevel l) { return std::string(kLevelNames[static_cast<std::size_t>(l)]); }

std::optional<AlertType> parse_alert_type(std::string_view s) {
    for (std::size_t i = 0; i < kAlertTypeCount; ++i)
        if (kTypeNames[i] == s) return static_cast<AlertType>(i);
    return std::nullopt;
}

std::optional<ThreatLevel> parse_threat_level(std::string_view s) {
    for (std::size_t i = 0; i < std::size(kLevelNames); ++i)
        if (kLevelNames[i] == s) return static_cast<ThreatLevel>(i);
    return std::nullopt;
}

ThreatLevel threat_level_for(AlertType t) {
    switch (t) {
    case AlertType::RTT_EXCEEDED: return ThreatLevel::Low;
    case AlertType::MALFORMED_PACKET: return ThreatLevel::Medium;
    default: return ThreatLevel::High;
    }
}

AlertClock AlertClock::wall() { return AlertClock{}; }

AlertClock AlertClock::fixed(std::int64_t base_epoch_sec) {
    AlertClock c;
    c.fixed_ = true;
    c.base_ = base_epoch_sec;
    return c;
}

std::optional<AlertClock> AlertClock::parse(std::string_view spec) {
    if (spec == "wall") return wall();
    constexpr std::string_view prefix = "fixed:";
    if (!starts_with(spec, prefix)) return std::nullopt;
    auto base = parse_log_time(spec.substr(prefix.size()));
    if (!base) return std::nullopt;
    return fixed(*base);
}

std::int64_t AlertClock::now(const Timestamp& packet_time) {
    if (!fixed_) {
        return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
            .count();
    }
    if (!anchor_) anchor_ = packet_time;
    const std::int64_t offset_ns = packet_time.ns() - anchor_->ns();
    // floor division so packets just before the anchor stay in the previous second
    std::int64_t offset_sec = offset_ns / 1'000'000'000;
    if (offset_ns < 0 && offset_ns % 1'000'000'000 != 0) --offset_sec;
    return base_ + offset_sec;
}

Alert AlertGenerator::emit(const AlertDraft& draft) {
    Alert a;
    a.id = next_id_++;
    a.type = draft.type;
    a.level = threat_level_for(draft.type);
    a.timestamp = clock_.now(draft.packet_time);
    a.reason = draft.reason;
    a.packet_info = draft.packet_info;
    a.packet_index = draft.packet_index;
    return a;
}

std::size_t write_section(std::ostream& out, const Alert& a) {
    std::string s;
    s.reserve(192);
    s += "[ALERT_" + std::to_string(a.id) + "]\n";
    s += "alert_type = " + to_string(a.type) + "\n";
    s += "threat_level = " + to_string(a.level) + "\n";
    s += "timestamp = " + format_log_time(a.timestamp) + "\n";
    s += "alert_reason = " + a.reason + "\n";
    s += "packet_info = " + a.packet_info + "\n";
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
    return s.size();
}

std::size_t write_log(const std::vector<Alert>& alerts, std::ostream& out) {
    std::size_t written = 0;
    for (std::size_t i = 0; i < alerts.size(); ++i) {
        if (i > 0) {
            out.put('\n');
            ++written;
        }
        written += write_section(out, alerts[i]);
    }
    if (!out) throw SinkError("alert log write failed");
    return written;
}

std::string format_log(const std::vector<Alert>& alerts) {
    std::ostringstream out;
    write_log(alerts, out);
    return out.str();
}

std::vector<Alert> parse_log(std::string_view text) {
    std::vector<Alert> alerts;
    std::optional<Alert> current;
    int fields = 0;
    auto finish = [&]() {
        if (!current) return;
        if (fields != 5) throw SinkError("alert section ALERT_" + std::to_string(current->id) + " is incomplete");
        alerts.push_back(*current);
        current.reset();
    };
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        const std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        if (starts_with(line, "[ALERT_") && line.back() == ']') {
            finish();
            current = Alert{};
            fields = 0;
            current->id = std::stoull(std::string(line.substr(7, line.size() - 8)));
            continue;
        }
        if (!current) throw SinkError("alert field outside a section");
        const auto eq = line.find(" = ");
        if (eq == std::string_view::npos) throw SinkError("malformed alert line");
        const std::string_view key = line.substr(0, eq);
        const std::string_view value = line.substr(eq + 3);
        if (key == "alert_type") {
            auto t = parse_alert_type(value);
            if (!t) throw SinkError("unknown alert type");
            current->type = *t;
        } else if (key == "threat_level") {
            auto l = parse_threat_level(value);
            if (!l) throw SinkError("unknown threat level");
            current->level = *l;
        } else if (key == "timestamp") {
            auto ts = parse_log_time(value);
            if (!ts) throw SinkError("bad timestamp");
            current->timestamp = *ts;
        } else if (key == "alert_reason") {
            current->reason = std::string(value);
        } else if (key == "packet_info") {
            current->packet_info = std::string(value);
        } else {
            throw SinkError("unknown alert field");
        }
        ++fields;
    }
    finish();
    return alerts;
}

std::string to_json_line(const Alert& a) {
    nlohmann::json j{{"id", a.id},
                     {"packet_index", a.packet_index},
                     {"alert_type", to_string(a.type)},
                     {"threat_level", to_string(a.level)},
                     {"reason", a.reason}};
    return j.dump() + "\n";
}

std::vector<Alert> parse_json_lines(std::string_view text) {
    std::vector<Alert> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            Alert a;
            a.id = j.at("id").get<std::uint64_t>();
            a.packet_index = j.at("packet_index").get<std::uint64_t>();
            auto t = parse_alert_type(j.at("alert_type").get<std::string>());
            auto l = parse_threat_level(j.at("threat_level").get<std::string>());
            if (!t || !l) throw SinkError("unknown enum value");
            a.type = *t;
            a.level = *l;
            a.reason = j.at("reason").get<std::string>();
            out.push_back(std::move(a));
        } catch (const nlohmann::json::exception& e) {
            throw SinkError("alert stream line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void AlertSink::write(const Alert& alert) {
    if (log_) {
        if (count_ > 0) {
            log_->put('\n');
            ++bytes_;
        }
        bytes_ += write_section(*log_, alert);
        if (!*log_) throw SinkError("alert log write failed");
    }
    if (jsonl_) {
        const std::string line = to_json_line(alert);
        jsonl_->write(line.data(), static_cast<std::streamsize>(line.size()));
        if (!*jsonl_) throw SinkError("alert stream write failed");
    }
    ++count_;
}

} // namespace gridwatch::alerting
