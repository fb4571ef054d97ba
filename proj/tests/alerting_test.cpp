#include <doctest.h>

#include <sstream>

#include "gridwatch/alerting.hpp"
#include "support.hpp"

using namespace gridwatch;
using namespace gridwatch::alerting;

namespace {

AlertDraft draft(AlertType t, std::string reason, std::string info, std::int64_t sec) {
    AlertDraft d;
    d.type = t;
    d.reason = std::move(reason);
    d.packet_info = std::move(info);
    d.packet_time = Timestamp{sec, 0};
    return d;
}

std::vector<Alert> rogue_alerts() {
    AlertGenerator gen(*AlertClock::parse("fixed:14.04.2022 10:47:09"));
    const std::string u = "ETH / IP / TCP / IEC104-U", i = "ETH / IP / TCP / IEC104-I";
    return {gen.emit(draft(AlertType::IP_MISMATCH, "IP of this packet is unknown: 173.24.0.3", u, 1000)),
            gen.emit(draft(AlertType::PORT_MISMATCH, "One of the Ports of this packet is unknown: 59478", u, 1000)),
            gen.emit(draft(AlertType::NO_SUCH_CONNECTION, "Connection does not exist in whitelisting data!", u, 1000)),
            gen.emit(draft(AlertType::INVALID_OPERATION, "Send packet contains invalid operation for the endpoint!", i,
                           1051)),
            gen.emit(draft(AlertType::INVALID_SETPOINT, "Active control command contains invalid setpoint!", i, 1051))};
}

} // namespace

TEST_CASE("ids start at zero and levels follow the table") {
    const auto alerts = rogue_alerts();
    CHECK(alerts[0].id == 0);
    CHECK(alerts[4].id == 4);
    CHECK(alerts[0].level == ThreatLevel::High);
    CHECK(threat_level_for(AlertType::RTT_EXCEEDED) == ThreatLevel::Low);
    CHECK(threat_level_for(AlertType::MALFORMED_PACKET) == ThreatLevel::Medium);
    CHECK(threat_level_for(AlertType::SEQUENCE_VIOLATION) == ThreatLevel::High);
}

TEST_CASE("rogue endpoint alerts render byte-identically") {
    CHECK(format_log(rogue_alerts()) == testing::read_text(testing::data_file("rogue_endpoint_golden.log")));
}

TEST_CASE("empty alert list gives an empty file") {
    std::ostringstream out;
    CHECK(write_log({}, out) == 0);
    CHECK(out.str().empty());
}

TEST_CASE("log and stream round trip") {
    const auto alerts = rogue_alerts();
    CHECK(parse_log(format_log(alerts)) == [&] {
        auto copy = alerts;
        for (auto& a : copy) a.packet_index = 0;  // the log carries no packet linkage
        return copy;
    }());
    std::string jsonl;
    for (const auto& a : alerts) jsonl += to_json_line(a);
    const auto back = parse_json_lines(jsonl);
    REQUIRE(back.size() == alerts.size());
    CHECK(back[3].type == AlertType::INVALID_OPERATION);
    CHECK(back[3].reason == alerts[3].reason);
}

TEST_CASE("streaming sink matches the batch writer") {
    const auto alerts = rogue_alerts();
    std::ostringstream log, jsonl;
    AlertSink sink(&log, &jsonl);
    for (const auto& a : alerts) sink.write(a);
    CHECK(log.str() == format_log(alerts));
    CHECK(sink.bytes_written() == log.str().size());
    CHECK(sink.count() == 5);
}

TEST_CASE("timestamp format") {
    CHECK(format_log_time(1649933229) == "14.04.2022 10:47:09");
    CHECK(parse_log_time("14.04.2022 10:47:09") == 1649933229);
    CHECK_FALSE(parse_log_time("2022-04-14 10:47:09"));
    CHECK_FALSE(AlertClock::parse("fixed:yesterday"));
}

TEST_CASE("fixed clock floors the offset from the anchor") {
    auto clock = *AlertClock::parse("fixed:14.04.2022 10:47:09");
    clock.anchor(Timestamp{500, 900'000'000});
    CHECK(clock.now(Timestamp{500, 900'000'000}) == 1649933229);
    CHECK(clock.now(Timestamp{501, 899'999'999}) == 1649933229);
    CHECK(clock.now(Timestamp{501, 900'000'000}) == 1649933230);
    CHECK(clock.now(Timestamp{500, 800'000'000}) == 1649933228);
}

TEST_CASE("malformed logs are rejected") {
    CHECK_THROWS_AS(parse_log("alert_type = IP_MISMATCH\n"), SinkError);
    CHECK_THROWS_AS(parse_log("[ALERT_0]\nalert_type = NOPE\n"), SinkError);
    CHECK_THROWS_AS(parse_log("[ALERT_0]\nalert_type = IP_MISMATCH\n"), SinkError);
}
