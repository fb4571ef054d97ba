#include <doctest.h>

#include <json.hpp>

#include "gridwatch/gim.hpp"
#include "support.hpp"

using namespace gridwatch;
using namespace gridwatch::gim;
using nlohmann::json;

namespace {

json minimal_doc() {
    return json::parse(R"({
      "meta": {"model_id": "m", "version": "1", "created": "2022-04-14"},
      "nodes": [
        {"id": "mtu1", "kind": "MTU", "mac": "00:00:00:00:00:01", "ip": "10.0.0.1"},
        {"id": "rtu1", "kind": "RTU", "mac": "00:00:00:00:00:02", "ip": "10.0.0.2",
         "data_points": [{"ioa": 1, "common_address": 1, "asdu_type": 13, "direction": "MONITOR", "unit": "kW"}]}
      ],
      "edges": [
        {"src": "mtu1", "dst": "rtu1", "kind": "COMM_CHANNEL",
         "channel": {"protocol": "IEC104", "server_port": 2404, "client": "mtu1", "server": "rtu1"}}
      ]})");
}

bool has_rule(const std::vector<Diagnostic>& d, const std::string& subject, const std::string& rule) {
    for (const auto& x : d)
        if (x.subject == subject && x.rule == rule) return true;
    return false;
}

} // namespace

TEST_CASE("minimal model loads with two nodes and one edge") {
    const auto g = load_model(minimal_doc().dump());
    CHECK(g.nodes.size() == 2);
    CHECK(g.edges.size() == 1);
    CHECK(validate_model(g).empty());
}

TEST_CASE("edge to a missing node is a referential error") {
    auto doc = minimal_doc();
    doc["edges"][0]["dst"] = "rtu9";
    try {
        load_model(doc.dump());
        FAIL("expected ModelError");
    } catch (const ModelError& e) {
        CHECK(e.diagnostic.kind == DiagnosticKind::Referential);
    }
}

TEST_CASE("testbed fixture has one MTU, three RTUs and three channels") {
    const auto g = testing::testbed_model();
    int mtus = 0, rtus = 0, channels = 0;
    for (const auto& n : g.nodes) {
        mtus += n.kind == AssetKind::MTU;
        rtus += n.kind == AssetKind::RTU;
    }
    for (const auto& e : g.edges) channels += e.kind == EdgeKind::CommChannel;
    CHECK(mtus == 1);
    CHECK(rtus == 3);
    CHECK(channels == 3);
    CHECK(validate_model(g).empty());
}

TEST_CASE("RTU without ip violates addressable-asset-needs-ip") {
    auto doc = minimal_doc();
    doc["nodes"][1].erase("ip");
    const auto d = validate_model(parse_model(doc.dump()));
    REQUIRE(d.size() == 1);
    CHECK(d[0] == Diagnostic{DiagnosticKind::Invariant, "rtu1", "addressable-asset-needs-ip"});
}

TEST_CASE("duplicate data point address yields one uniqueness diagnostic") {
    auto doc = minimal_doc();
    doc["nodes"][1]["data_points"].push_back(doc["nodes"][1]["data_points"][0]);
    const auto d = validate_model(parse_model(doc.dump()));
    CHECK(d.size() == 1);
    CHECK(has_rule(d, "rtu1", "unique-data-point-address"));
}

TEST_CASE("schema rejects unknown fields and bad addresses") {
    SUBCASE("unknown field") {
        auto doc = minimal_doc();
        doc["nodes"][0]["colour"] = "red";
        CHECK_THROWS_AS(load_model(doc.dump()), ModelError);
    }
    SUBCASE("bad MAC") {
        auto doc = minimal_doc();
        doc["nodes"][0]["mac"] = "00:00:00:00:00";
        CHECK_THROWS_AS(load_model(doc.dump()), ModelError);
    }
    SUBCASE("bad enum") {
        auto doc = minimal_doc();
        doc["nodes"][0]["kind"] = "PLC";
        CHECK_THROWS_AS(load_model(doc.dump()), ModelError);
    }
    SUBCASE("not JSON") { CHECK_THROWS_AS(load_model("{nodes"), ModelError); }
}

TEST_CASE("invariants on limits, directions and channels") {
    SUBCASE("cos phi bounds") {
        auto doc = minimal_doc();
        doc["nodes"][1]["op_limits"] = {{"p_max_kw", 1}, {"q_max_kvar", 1}, {"cos_phi_min", 0.9}, {"cos_phi_max", 1.2}};
        CHECK(has_rule(validate_model(parse_model(doc.dump())), "rtu1", "cos-phi-bounds"));
    }
    SUBCASE("control direction needs a control type") {
        auto doc = minimal_doc();
        doc["nodes"][1]["data_points"][0]["direction"] = "CONTROL";
        CHECK(has_rule(validate_model(parse_model(doc.dump())), "rtu1", "data-point-type-matches-direction"));
    }
    SUBCASE("data points only on field devices") {
        auto doc = minimal_doc();
        doc["nodes"][0]["data_points"] = doc["nodes"][1]["data_points"];
        CHECK(has_rule(validate_model(parse_model(doc.dump())), "mtu1", "data-points-only-on-field-devices"));
    }
    SUBCASE("comm channel needs a descriptor") {
        auto doc = minimal_doc();
        doc["edges"][0].erase("channel");
        CHECK(has_rule(validate_model(parse_model(doc.dump())), "COMM_CHANNEL:mtu1->rtu1",
                       "comm-channel-needs-descriptor"));
    }
    SUBCASE("duplicate addresses") {
        auto doc = minimal_doc();
        doc["nodes"][1]["ip"] = "10.0.0.1";
        CHECK(has_rule(validate_model(parse_model(doc.dump())), "rtu1", "unique-address"));
    }
}

TEST_CASE("serialization round trip") {
    const auto g = testing::testbed_model();
    CHECK(load_model(serialize_model(g)) == g);
}

TEST_CASE("diagnostics do not depend on node order") {
    auto doc = minimal_doc();
    doc["nodes"][1].erase("ip");
    doc["nodes"][0].erase("mac");
    const auto a = validate_model(parse_model(doc.dump()));
    std::swap(doc["nodes"][0], doc["nodes"][1]);
    const auto b = validate_model(parse_model(doc.dump()));
    CHECK(a == b);
    CHECK(a.size() == 2);
}
