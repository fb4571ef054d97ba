#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gridwatch/net.hpp"

namespace gridwatch::alerting {

enum class AlertType : std::uint8_t {
    IP_MISMATCH,
    MAC_MISMATCH,
    PORT_MISMATCH,
    NO_SUCH_CONNECTION,
    DATAPOINT_MISMATCH,
    TYPE_MISMATCH,
    INVALID_OPERATION,
    INVALID_SETPOINT,
    SEQUENCE_VIOLATION,
    AUTOMATA_VIOLATION,
    RTT_EXCEEDED,
    PROTOCOL_NOT_ALLOWED,
    TIME_WINDOW_VIOLATION,
    MALFORMED_PACKET,
};
inline constexpr std::size_t kAlertTypeCount = 14;

enum class ThreatLevel : std::uint8_t { Low, Medium, High };

std::string to_string(AlertType t);
std::string to_string(ThreatLevel l);
std::optional<AlertType> parse_alert_type(std::string_view s);
std::optional<ThreatLevel> parse_threat_level(std::string_view s);

ThreatLevel threat_level_for(AlertType t);

// A violation found by the engine, before it is numbered and timestamped.
struct AlertDraft {
    AlertType type = AlertType::MALFORMED_PACKET;
    std::string reason;
    std::string packet_info;
    std::uint64_t packet_index = 0;
    Timestamp packet_time;

    bool operator==(const AlertDraft&) const = default;
};

struct Alert {
    std::uint64_t id = 0;
    AlertType type = AlertType::MALFORMED_PACKET;
    ThreatLevel level = ThreatLevel::High;
    std::int64_t timestamp = 0;  // epoch seconds, UTC
    std::string reason;
    std::string packet_info;
    std::uint64_t packet_index = 0;

    bool operator==(const Alert&) const = default;
};

// Source of alert creation times. `wall` reads the system clock; `fixed`
// anchors the first packet seen at `base` and advances with capture time so
// replays are reproducible.
class AlertClock {
public:
    static AlertClock wall();
    static AlertClock fixed(std::int64_t base_epoch_sec);
    // Accepts "fixed:DD.MM.YYYY HH:MM:SS" or "wall".
    static std::optional<AlertClock> parse(std::string_view spec);

    std::int64_t now(const Timestamp& packet_time);
    // Pins the capture time that maps to `base`; otherwise the first call to now() does.
    void anchor(const Timestamp& first_packet_time) { anchor_ = first_packet_time; }

private:
    bool fixed_ = false;
    std::int64_t base_ = 0;
    std::optional<Timestamp> anchor_;
};

// Single id allocator for a run.
class AlertGenerator {
public:
    explicit AlertGenerator(AlertClock clock) : clock_(std::move(clock)) {}

    Alert emit(const AlertDraft& draft);
    std::uint64_t emitted() const { return next_id_; }

private:
    AlertClock clock_;
    std::uint64_t next_id_ = 0;
};

class SinkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// INI-style alert log.
std::size_t write_section(std::ostream& out, const Alert& alert);
std::size_t write_log(const std::vector<Alert>& alerts, std::ostream& out);
std::string format_log(const std::vector<Alert>& alerts);
std::vector<Alert> parse_log(std::string_view text);

// Companion stream: one JSON object per line with packet linkage.
std::string to_json_line(const Alert& alert);
std::vector<Alert> parse_json_lines(std::string_view text);

// Streams alerts to the log and (optionally) the companion stream as they
// are emitted.
class AlertSink {
public:
    AlertSink(std::ostream* log, std::ostream* jsonl) : log_(log), jsonl_(jsonl) {}

    void write(const Alert& alert);
    std::size_t bytes_written() const { return bytes_; }
    std::uint64_t count() const { return count_; }

private:
    std::ostream* log_;
    std::ostream* jsonl_;
    std::size_t bytes_ = 0;
    std::uint64_t count_ = 0;
};

} // namespace gridwatch::alerting
