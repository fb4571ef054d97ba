#pragma once

// Labeled scenario captures, replay through the engine and scoring against
// ground truth.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gridwatch/alerting.hpp"
#include "gridwatch/engine.hpp"
#include "gridwatch/gim.hpp"
#include "gridwatch/packet.hpp"
#include "gridwatch/rules.hpp"

namespace gridwatch::harness {

enum class ScenarioId { S1, S2A, S2B1, S2B2 };
std::string to_string(ScenarioId id);
std::optional<ScenarioId> parse_scenario_id(std::string_view s);

struct Label {
    std::uint64_t index = 0;
    bool malicious = false;
    std::string scenario_tag;
    bool operator==(const Label&) const = default;
};

struct LabeledCapture {
    std::vector<RawPacket> packets;
    std::vector<Label> labels;
};

struct ScenarioParams {
    std::size_t benign_packets = 200;
    std::size_t rogue_packets = 115;
    std::size_t injected_frames = 10;
    double rtt_min_ms = 50;
    double rtt_max_ms = 180;
    std::int64_t start_epoch = 1649933229;  // 14.04.2022 10:47:09 UTC
};

class FixtureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LabelMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Deterministic per (id, seed, params). The GIM must contain one MTU with an
// IEC 104 channel to at least one RTU hosting data points.
LabeledCapture generate_scenario(ScenarioId id, std::uint64_t seed, const gim::Gim& model,
                                 const ScenarioParams& params = {});

// Legitimate prelude, one rogue STARTDT from behind the gateway and an
// out-of-range set-point sent by the RTU 51 s later.
LabeledCapture rogue_endpoint_capture(const gim::Gim& model);

struct LatencyStats {
    std::size_t count = 0;
    double mean_ms = 0;
    double p50_ms = 0;
    double p95_ms = 0;
};
LatencyStats summarize(std::vector<double> samples_ms);

struct ReplayOptions {
    engine::EngineOptions engine;
    std::size_t workers = 1;
    bool paced = false;  // sleep to reproduce capture timing
};

struct ReplayResult {
    std::vector<engine::InspectionReport> reports;  // one per packet, capture order
    std::vector<double> latency_ms;                 // per packet, capture order
    std::vector<double> rtt_samples_ms;
    LatencyStats valid;
    LatencyStats invalid;

    std::vector<alerting::AlertDraft> drafts() const;
};

// Feeds packets in capture order. With several workers each connection stays
// on one shard; reports are merged back into capture order.
ReplayResult replay(const std::vector<RawPacket>& packets, const rules::SpecificationBase& sb,
                    const ReplayOptions& options = {});

std::vector<alerting::Alert> emit_alerts(const std::vector<alerting::AlertDraft>& drafts, alerting::AlertClock clock);

struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t total() const { return tp + tn + fp + fn; }
    std::string str() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

// A packet is predicted malicious iff at least one alert references it.
ConfusionMatrix score(const std::vector<alerting::Alert>& alerts, const std::vector<Label>& labels);

std::string format_labels(const std::vector<Label>& labels);
std::vector<Label> parse_labels(std::string_view text);
void check_labels(const std::vector<Label>& labels, std::size_t packet_count);

// Value of an information object as a double (bools as 0/1).
double numeric_value(const iec104::Value& v);

// CP56Time2a for a capture timestamp.
std::array<std::uint8_t, 7> cp56_time(Timestamp ts);

} // namespace gridwatch::harness
