#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gridwatch/alerting.hpp"
#include "gridwatch/engine.hpp"
#include "gridwatch/gim.hpp"
#include "gridwatch/harness.hpp"
#include "gridwatch/pcap.hpp"
#include "gridwatch/rules.hpp"

using namespace gridwatch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw InputError("cannot write " + path);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

void print_latency(const char* name, const harness::LatencyStats& s) {
    std::cout << "latency_" << name << "_count=" << s.count << "\n"
              << "latency_" << name << "_mean_ms=" << fmt(s.mean_ms) << "\n"
              << "latency_" << name << "_p50_ms=" << fmt(s.p50_ms) << "\n"
              << "latency_" << name << "_p95_ms=" << fmt(s.p95_ms) << "\n";
}

std::vector<alerting::Alert> load_alerts(const std::string& path) {
    const std::string text = slurp(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    if (text[first] != '{') throw InputError(path + " is not an alert stream (expected JSON lines)");
    return alerting::parse_json_lines(text);
}

struct RulesArgs {
    std::string gim;
    std::string config;
    std::string out;
};

int cmd_rules(const RulesArgs& a) {
    const auto model = gim::load_model_file(a.gim);
    const auto config = rules::load_config_file(a.config);
    const auto sb = rules::generate_rules(model, config);
    const std::string doc = rules::export_rules(sb);
    if (a.out.empty() || a.out == "-")
        std::cout << doc;
    else
        write_text(a.out, doc);
    std::cerr << "rules: " << sb.endpoints.size() << " endpoints, " << sb.channels.size() << " channels, "
              << sb.datapoints.size() << " datapoints, checksum " << sb.checksum << "\n";
    return kExitOk;
}

struct InspectArgs {
    std::string rules;
    std::string pcap;
    std::string log;
    std::string jsonl;
    std::string labels;
    std::string clock = "wall";
    bool assume_started = false;
    std::size_t workers = 1;
};

int cmd_inspect(const InspectArgs& a) {
    const auto sb = rules::import_rules_file(a.rules);
    const auto packets = pcap::read_file(a.pcap);
    auto clock = alerting::AlertClock::parse(a.clock);
    if (!clock) throw InputError("bad --clock value: " + a.clock);
    if (!packets.empty()) clock->anchor(packets.front().ts);
    std::optional<std::vector<harness::Label>> labels;
    if (!a.labels.empty()) {
        labels = harness::parse_labels(slurp(a.labels));
        harness::check_labels(*labels, packets.size());
    }

    harness::ReplayOptions opts;
    opts.engine.assume_started = a.assume_started;
    opts.workers = a.workers;
    const auto result = harness::replay(packets, sb, opts);

    std::ofstream log(a.log, std::ios::binary);
    if (!log) throw InputError("cannot write " + a.log);
    std::ofstream jsonl;
    if (!a.jsonl.empty()) {
        jsonl.open(a.jsonl, std::ios::binary);
        if (!jsonl) throw InputError("cannot write " + a.jsonl);
    }
    alerting::AlertSink sink(&log, a.jsonl.empty() ? nullptr : &jsonl);
    alerting::AlertGenerator gen(*clock);
    std::map<std::string, std::uint64_t> by_type;
    std::vector<alerting::Alert> alerts;
    for (const auto& d : result.drafts()) {
        auto alert = gen.emit(d);
        sink.write(alert);
        ++by_type[alerting::to_string(alert.type)];
        alerts.push_back(std::move(alert));
    }
    log.close();
    if (!log) throw alerting::SinkError("alert log write failed");

    std::cout << "packets=" << packets.size() << "\n"
              << "alerts=" << alerts.size() << "\n"
              << "rules_checksum=" << sb.checksum << "\n";
    for (const auto& [type, n] : by_type) std::cout << "alert_count." << type << "=" << n << "\n";
    print_latency("valid", result.valid);
    print_latency("invalid", result.invalid);
    if (labels) std::cout << harness::score(alerts, *labels).str() << "\n";
    return kExitOk;
}

struct ScenarioArgs {
    std::string id;
    std::uint64_t seed = 1;
    std::string gim;
    std::string out;
    std::size_t benign = 200;
};

int cmd_scenario(const ScenarioArgs& a) {
    const auto id = harness::parse_scenario_id(a.id);
    if (!id) throw InputError("unknown scenario id: " + a.id);
    const auto model = gim::load_model_file(a.gim);
    harness::ScenarioParams params;
    params.benign_packets = a.benign;
    const auto capture = harness::generate_scenario(*id, a.seed, model, params);
    pcap::write_file(a.out + ".pcap", capture.packets);
    write_text(a.out + ".labels.jsonl", harness::format_labels(capture.labels));
    std::size_t malicious = 0;
    for (const auto& l : capture.labels) malicious += l.malicious ? 1 : 0;
    std::cout << "packets=" << capture.packets.size() << " malicious=" << malicious << "\n";
    return kExitOk;
}

struct ScoreArgs {
    std::string alerts;
    std::string labels;
};

int cmd_score(const ScoreArgs& a) {
    const auto alerts = load_alerts(a.alerts);
    const auto labels = harness::parse_labels(slurp(a.labels));
    std::cout << harness::score(alerts, labels).str() << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Specification-based intrusion detection for IEC 60870-5-104 networks"};
    app.require_subcommand(1);

    RulesArgs rules_args;
    auto* rules_cmd = app.add_subcommand("rules", "Compile a specification base from an infrastructure model");
    rules_cmd->add_option("--gim", rules_args.gim, "Infrastructure model (JSON)")->required();
    rules_cmd->add_option("--config", rules_args.config, "Rule generator configuration (JSON)")->required();
    rules_cmd->add_option("-o,--out", rules_args.out, "Output rule document ('-' for stdout)");

    InspectArgs inspect_args;
    auto* inspect_cmd = app.add_subcommand("inspect", "Inspect a capture against a rule document");
    inspect_cmd->add_option("--rules", inspect_args.rules, "Rule document")->required();
    inspect_cmd->add_option("--pcap", inspect_args.pcap, "Capture file")->required();
    inspect_cmd->add_option("--log", inspect_args.log, "Alert log output")->required();
    inspect_cmd->add_option("--alerts-jsonl", inspect_args.jsonl, "Alert stream with packet indices");
    inspect_cmd->add_option("--labels", inspect_args.labels, "Ground-truth labels; prints a confusion matrix");
    inspect_cmd->add_option("--clock", inspect_args.clock, "'wall' or 'fixed:DD.MM.YYYY HH:MM:SS'");
    inspect_cmd->add_flag("--assume-started", inspect_args.assume_started,
                          "Treat connections first seen mid-stream as started");
    inspect_cmd->add_option("--workers", inspect_args.workers, "Connection shards")->check(CLI::Range(1, 64));

    ScenarioArgs scenario_args;
    auto* scenario_cmd = app.add_subcommand("scenario", "Generate a labeled scenario capture");
    scenario_cmd->add_option("--id", scenario_args.id, "S1, S2A, S2B1 or S2B2")->required();
    scenario_cmd->add_option("--seed", scenario_args.seed, "Generator seed");
    scenario_cmd->add_option("--gim", scenario_args.gim, "Infrastructure model (JSON)")->required();
    scenario_cmd->add_option("--out", scenario_args.out, "Output prefix")->required();
    scenario_cmd->add_option("--benign", scenario_args.benign, "Benign packet count");

    ScoreArgs score_args;
    auto* score_cmd = app.add_subcommand("score", "Score an alert stream against labels");
    score_cmd->add_option("--alerts", score_args.alerts, "Alert stream (JSON lines)")->required();
    score_cmd->add_option("--labels", score_args.labels, "Label sidecar")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*rules_cmd) return cmd_rules(rules_args);
        if (*inspect_cmd) return cmd_inspect(inspect_args);
        if (*scenario_cmd) return cmd_scenario(scenario_args);
        if (*score_cmd) return cmd_score(score_args);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const gim::ModelError& e) {
        std::cerr << "model error: " << gim::to_string(e.diagnostic) << "\n";
        return kExitInput;
    } catch (const rules::RuleError& e) {
        std::cerr << "rule error: " << e.what() << "\n";
        return kExitInput;
    } catch (const pcap::CaptureError& e) {
        std::cerr << "capture error: " << e.what() << "\n";
        return kExitInput;
    } catch (const harness::LabelMismatch& e) {
        std::cerr << "label mismatch: " << e.what() << "\n";
        return kExitInput;
    } catch (const harness::FixtureError& e) {
        std::cerr << "fixture error: " << e.what() << "\n";
        return kExitInput;
    } catch (const alerting::SinkError& e) {
        std::cerr << "alert sink error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
