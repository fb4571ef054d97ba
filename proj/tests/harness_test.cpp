#include <doctest.h>

#include "gridwatch/harness.hpp"
#include "gridwatch/pcap.hpp"
#include "support.hpp"

using namespace gridwatch;
using namespace gridwatch::harness;

namespace {

std::size_t malicious(const std::vector<Label>& labels) {
    std::size_t n = 0;
    for (const auto& l : labels) n += l.malicious;
    return n;
}

ConfusionMatrix run(ScenarioId id, std::uint64_t seed) {
    const auto model = testing::testbed_model();
    const auto cap = generate_scenario(id, seed, model);
    const auto res = replay(cap.packets, testing::testbed_rules());
    auto clock = *alerting::AlertClock::parse("fixed:14.04.2022 10:47:09");
    clock.anchor(cap.packets.front().ts);
    return score(emit_alerts(res.drafts(), clock), cap.labels);
}

} // namespace

TEST_CASE("scenario sizes and label counts") {
    const auto model = testing::testbed_model();
    const auto s1 = generate_scenario(ScenarioId::S1, 1, model);
    CHECK(s1.packets.size() == 200);
    CHECK(malicious(s1.labels) == 0);
    const auto s2a = generate_scenario(ScenarioId::S2A, 1, model);
    CHECK(s2a.packets.size() == 315);
    CHECK(malicious(s2a.labels) == 115);
    for (auto id : {ScenarioId::S2B1, ScenarioId::S2B2}) {
        const auto c = generate_scenario(id, 1, model);
        CHECK(malicious(c.labels) == 10);
        CHECK(c.labels.size() == c.packets.size());
    }
}

TEST_CASE("captures are time ordered and labels indexed") {
    const auto c = generate_scenario(ScenarioId::S2A, 3, testing::testbed_model());
    for (std::size_t i = 1; i < c.packets.size(); ++i) CHECK(c.packets[i - 1].ts <= c.packets[i].ts);
    for (std::size_t i = 0; i < c.labels.size(); ++i) CHECK(c.labels[i].index == i);
}

TEST_CASE("generation is deterministic per seed") {
    const auto model = testing::testbed_model();
    const auto a = generate_scenario(ScenarioId::S2B2, 4, model);
    const auto b = generate_scenario(ScenarioId::S2B2, 4, model);
    const auto c = generate_scenario(ScenarioId::S2B2, 5, model);
    CHECK(pcap::write_bytes(a.packets) == pcap::write_bytes(b.packets));
    CHECK(a.labels == b.labels);
    CHECK(pcap::write_bytes(a.packets) != pcap::write_bytes(c.packets));
}

TEST_CASE("S2B2 injections stay inside the registered bounds") {
    const auto model = testing::testbed_model();
    const auto sb = testing::testbed_rules();
    const auto cap = generate_scenario(ScenarioId::S2B2, 2, model);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < cap.packets.size(); ++i) {
        if (!cap.labels[i].malicious) continue;
        const auto l = decode_packet(cap.packets[i]);
        REQUIRE(l.iec104.size() == 1);
        const auto* apdu = l.iec104[0].apdu();
        REQUIRE(apdu);
        REQUIRE(apdu->asdu);
        const auto& a = *apdu->asdu;
        for (const auto& o : a.objects) {
            const auto& rule = sb.datapoints.at(rules::DatapointKey{l.ip->src_ip, a.common_address, o.ioa});
            CHECK(rule.asdu_type == a.type_id);
            const double v = numeric_value(o.value);
            if (rule.min_value) CHECK(v >= *rule.min_value);
            if (rule.max_value) CHECK(v <= *rule.max_value);
            ++checked;
        }
    }
    CHECK(checked == 10);
}

TEST_CASE("seed 1 confusion matrices") {
    CHECK(run(ScenarioId::S1, 1) == ConfusionMatrix{0, 200, 0, 0});
    CHECK(run(ScenarioId::S2A, 1) == ConfusionMatrix{115, 200, 0, 0});
    CHECK(run(ScenarioId::S2B1, 1) == ConfusionMatrix{10, 210, 0, 0});
}

TEST_CASE("scoring") {
    std::vector<Label> labels{{0, false, "S1"}, {1, true, "S2A"}, {2, true, "S2A"}, {3, false, "S1"}};
    alerting::Alert a;
    a.packet_index = 1;
    alerting::Alert b = a;
    b.packet_index = 3;
    const auto m = score({a, a, b}, labels);
    CHECK(m == ConfusionMatrix{1, 1, 1, 1});
    CHECK(m.str() == "tp=1 tn=1 fp=1 fn=1");
    CHECK(parse_labels(format_labels(labels)) == labels);
    CHECK_THROWS_AS(check_labels(labels, 5), LabelMismatch);
    CHECK_NOTHROW(check_labels(labels, 4));
    std::vector<Label> gap{{0, false, "S1"}, {2, false, "S1"}};
    CHECK_THROWS_AS(check_labels(gap, 2), LabelMismatch);
}

TEST_CASE("summary statistics") {
    const auto s = summarize({4, 1, 3, 2});
    CHECK(s.count == 4);
    CHECK(s.mean_ms == doctest::Approx(2.5));
    CHECK(summarize({}).count == 0);
}

TEST_CASE("bundled rogue endpoint capture matches the generator") {
    const auto gim = gim::load_model_file(testing::fixture("rogue_gim.json"));
    const auto built = rogue_endpoint_capture(gim);
    CHECK(pcap::write_bytes(built.packets) ==
          pcap::write_bytes(pcap::read_file(testing::data_file("rogue_endpoint.pcap"))));
}

TEST_CASE("parallel replay gives the same drafts as serial replay") {
    const auto cap = generate_scenario(ScenarioId::S2A, 7, testing::testbed_model());
    const auto sb = testing::testbed_rules();
    ReplayOptions four;
    four.workers = 4;
    const auto a = replay(cap.packets, sb).drafts();
    const auto b = replay(cap.packets, sb, four).drafts();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].packet_index == b[i].packet_index);
        CHECK(a[i].type == b[i].type);
        CHECK(a[i].reason == b[i].reason);
    }
}

TEST_CASE("cp56 time encodes milliseconds and minutes") {
    const auto t = cp56_time(Timestamp{1649933229, 500'000'000});
    CHECK((t[0] | (t[1] << 8)) == 9500);
    CHECK((t[2] & 0x3F) == 47);
    CHECK((t[3] & 0x1F) == 10);
    CHECK((t[4] & 0x1F) == 14);
    CHECK((t[5] & 0x0F) == 4);
    CHECK((t[6] & 0x7F) == 22);
}
