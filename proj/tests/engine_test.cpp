#include <doctest.h>

#include "gridwatch/engine.hpp"
#include "support.hpp"

using namespace gridwatch;
using namespace gridwatch::engine;
using alerting::AlertType;
using iec104::UFunction;

namespace {

struct Ep {
    MacAddress mac;
    Ipv4Address ip;
    std::uint16_t port;
};

const Ep kMtu{*MacAddress::parse("00:1b:21:3a:4f:01"), *Ipv4Address::parse("172.24.0.2"), 50000};
const Ep kPv12{*MacAddress::parse("00:1b:21:3a:4f:12"), *Ipv4Address::parse("172.24.0.12"), 2404};
const Ep kPv36{*MacAddress::parse("00:1b:21:3a:4f:36"), *Ipv4Address::parse("172.24.0.36"), 2404};

RawPacket frame(const Ep& src, const Ep& dst, std::uint32_t seq, std::uint32_t ack, std::uint8_t flags,
                const Bytes& payload, Timestamp ts) {
    TcpFrameSpec s;
    s.src_mac = src.mac;
    s.dst_mac = dst.mac;
    s.src_ip = src.ip;
    s.dst_ip = dst.ip;
    s.src_port = src.port;
    s.dst_port = dst.port;
    s.seq = seq;
    s.ack = ack;
    s.flags = flags;
    return RawPacket{ts, build_tcp_frame(s, payload)};
}

std::vector<AlertType> types(const InspectionReport& r) {
    std::vector<AlertType> out;
    for (const auto& d : r.violations) out.push_back(d.type);
    return out;
}

iec104::Asdu asdu(std::uint8_t type_id, std::uint8_t cot, std::uint16_t ca, std::uint32_t ioa, iec104::Value v) {
    iec104::Asdu a;
    a.type_id = type_id;
    a.cot = cot;
    a.common_address = ca;
    iec104::InformationObject o;
    o.ioa = ioa;
    o.value = v;
    o.qualifier = type_id == iec104::type::C_IC_NA_1 ? 20 : 0;
    a.objects = {o};
    return a;
}

// Drives one MTU-RTU connection with consistent TCP and IEC 104 counters.
struct Session {
    Engine& eng;
    Ep client;
    Ep server;
    std::uint64_t index = 0;
    std::int64_t t_ns = 1'649'933'229'000'000'000;
    std::uint32_t cseq = 1000;
    std::uint32_t sseq = 90000;
    std::uint16_t mtu_vs = 0;
    std::uint16_t rtu_vs = 0;

    InspectionReport raw(bool from_client, const Bytes& payload, std::uint8_t flags, std::int64_t dt_ms = 20) {
        t_ns += dt_ms * 1'000'000;
        const Ep& s = from_client ? client : server;
        const Ep& d = from_client ? server : client;
        std::uint32_t& seq = from_client ? cseq : sseq;
        const std::uint32_t ack = from_client ? sseq : cseq;
        auto r = eng.inspect(frame(s, d, seq, ack, flags, payload, Timestamp::from_ns(t_ns)), index++);
        seq += static_cast<std::uint32_t>(payload.size()) + ((flags & tcp_flag::SYN) ? 1 : 0);
        return r;
    }
    std::vector<InspectionReport> handshake() {
        return {raw(true, {}, tcp_flag::SYN), raw(false, {}, tcp_flag::SYN | tcp_flag::ACK),
                raw(true, {}, tcp_flag::ACK)};
    }
    InspectionReport u(bool from_client, UFunction fn) {
        return raw(from_client, iec104::encode_apdu(iec104::make_u_frame(fn)), tcp_flag::PSH | tcp_flag::ACK);
    }
    InspectionReport i(bool from_client, const iec104::Asdu& a) {
        std::uint16_t& vs = from_client ? mtu_vs : rtu_vs;
        const std::uint16_t nr = from_client ? rtu_vs : mtu_vs;
        auto r = raw(from_client, iec104::encode_apdu(iec104::make_i_frame(vs, nr, a)), tcp_flag::PSH | tcp_flag::ACK);
        vs = automata::seq_add(vs, 1);
        return r;
    }
    void start() {
        handshake();
        u(true, UFunction::StartDtAct);
        u(false, UFunction::StartDtCon);
    }
};

bool all_clean(const std::vector<InspectionReport>& rs) {
    for (const auto& r : rs)
        if (!r.conformant()) return false;
    return true;
}

} // namespace

TEST_CASE("in-spec STARTDT from the whitelisted MTU raises nothing") {
    Engine eng(testing::testbed_rules());
    Session s{eng, kMtu, kPv12};
    CHECK(all_clean(s.handshake()));
    const auto r = s.u(true, UFunction::StartDtAct);
    CHECK(r.conformant());
    CHECK(r.category.kind == PacketCategory::Kind::IEC104);
    CHECK(s.u(false, UFunction::StartDtCon).conformant());
    CHECK(eng.connection_count() == 1);
}

TEST_CASE("rogue U-frame yields IP, PORT and NO_SUCH_CONNECTION in order") {
    Engine eng(testing::testbed_rules());
    const Ep rogue{kMtu.mac, *Ipv4Address::parse("173.24.0.3"), 59478};
    const auto r = eng.inspect(frame(rogue, kPv12, 1, 1, tcp_flag::PSH | tcp_flag::ACK,
                                     iec104::encode_apdu(iec104::make_u_frame(UFunction::StartDtAct)),
                                     Timestamp{1649933229, 0}),
                               0);
    CHECK(types(r) ==
          std::vector<AlertType>{AlertType::IP_MISMATCH, AlertType::PORT_MISMATCH, AlertType::NO_SUCH_CONNECTION});
    CHECK(r.violations[0].reason == "IP of this packet is unknown: 173.24.0.3");
    CHECK(r.violations[1].reason == "One of the Ports of this packet is unknown: 59478");
    CHECK(r.violations[0].packet_info == "ETH / IP / TCP / IEC104-U");
    CHECK(eng.connection_count() == 0);
}

TEST_CASE("unknown MAC is reported first") {
    Engine eng(testing::testbed_rules());
    Ep stranger{*MacAddress::parse("02:00:00:00:00:99"), *Ipv4Address::parse("10.9.9.9"), 40000};
    const auto r = eng.inspect(frame(stranger, kPv12, 1, 0, tcp_flag::SYN, {}, Timestamp{1, 0}), 0);
    REQUIRE_FALSE(r.violations.empty());
    CHECK(r.violations[0].type == AlertType::MAC_MISMATCH);
    CHECK(r.violations[0].reason == "MAC of this packet is unknown: 02:00:00:00:00:99");
    CHECK(r.violations[0].packet_info == "ETH / IP / TCP");
}

TEST_CASE("set-point above the data point max raises INVALID_SETPOINT") {
    Engine eng(testing::testbed_rules());
    Session s{eng, kMtu, kPv36};
    s.start();
    const auto r = s.i(true, asdu(iec104::type::C_SE_NC_1, iec104::cot::Activation, 2, 2001, 40.0f));
    CHECK(types(r) == std::vector<AlertType>{AlertType::INVALID_SETPOINT});
    CHECK(r.violations[0].reason == "Active control command contains invalid setpoint!");
    CHECK(r.violations[0].packet_info == "ETH / IP / TCP / IEC104-I");
}

TEST_CASE("IOA absent from the data point map raises DATAPOINT_MISMATCH") {
    Engine eng(testing::testbed_rules());
    Session s{eng, kMtu, kPv12};
    s.start();
    const auto r = s.i(false, asdu(iec104::type::M_ME_NC_1, iec104::cot::Spontaneous, 1, 99999, 1.0f));
    CHECK(types(r) == std::vector<AlertType>{AlertType::DATAPOINT_MISMATCH});
}

TEST_CASE("data point and operation checks") {
    const auto sb = testing::testbed_rules();
    RuleIndex index(sb);
    ConnectionObject conn({kMtu.ip, kMtu.port, kPv12.ip, 2404}, &sb.channels.front(), automata::State::Started, true);
    SUBCASE("registered monitor float from the RTU") {
        CHECK(check_datapoint(asdu(13, iec104::cot::Spontaneous, 1, 1001, 3.0f), false, conn, index).empty());
    }
    SUBCASE("control command sent by the RTU") {
        const auto d = check_datapoint(asdu(50, iec104::cot::Activation, 1, 2001, 3.0f), false, conn, index);
        REQUIRE(d.size() == 1);
        CHECK(d[0].type == AlertType::INVALID_OPERATION);
        CHECK(d[0].reason == "Send packet contains invalid operation for the endpoint!");
    }
    SUBCASE("monitor value sent by the MTU") {
        const auto d = check_datapoint(asdu(13, iec104::cot::Spontaneous, 1, 1001, 3.0f), true, conn, index);
        REQUIRE(d.size() == 1);
        CHECK(d[0].type == AlertType::INVALID_OPERATION);
    }
    SUBCASE("confirmation by the RTU is allowed") {
        CHECK(check_datapoint(asdu(50, iec104::cot::ActivationCon, 1, 2001, 3.0f), false, conn, index).empty());
    }
    SUBCASE("unknown IOA 99999") {
        const auto d = check_datapoint(asdu(13, iec104::cot::Spontaneous, 1, 99999, 3.0f), false, conn, index);
        REQUIRE(d.size() == 1);
        CHECK(d[0].type == AlertType::DATAPOINT_MISMATCH);
    }
    SUBCASE("wrong type for a registered IOA") {
        const auto d = check_datapoint(asdu(36, iec104::cot::Spontaneous, 1, 1001, 3.0f), false, conn, index);
        REQUIRE(d.size() == 1);
        CHECK(d[0].type == AlertType::TYPE_MISMATCH);
    }
    SUBCASE("interrogation of an unknown common address") {
        const auto d = check_datapoint(asdu(100, iec104::cot::Activation, 9, 0, {}), true, conn, index);
        REQUIRE(d.size() == 1);
        CHECK(d[0].type == AlertType::DATAPOINT_MISMATCH);
    }
}

TEST_CASE("set-point bounds") {
    rules::DatapointRule kw{50, gim::Direction::Control, "kW", 0.0, 12.0};
    iec104::InformationObject o;
    o.value = 10.0f;
    CHECK_FALSE(check_setpoint(o, kw));
    const auto sb = testing::testbed_rules();
    const auto& pv36 = sb.datapoints.at(rules::DatapointKey{kPv36.ip, 2, 2001});
    CHECK(pv36.max_value == 36.0);
    o.value = 40.0f;
    CHECK(check_setpoint(o, pv36));
    rules::DatapointRule cos{50, gim::Direction::Control, "cos_phi", -1.0, 1.0};
    o.value = 1.5f;
    CHECK(check_setpoint(o, cos));
}

TEST_CASE("round-trip time check") {
    const auto sb = testing::testbed_rules();
    auto run = [&](int ack_after_ms) {
        Engine eng(sb);
        Session s{eng, kMtu, kPv12};
        s.start();
        s.raw(true, {}, tcp_flag::ACK);
        s.u(true, UFunction::TestFrAct);
        return s.raw(false, {}, tcp_flag::ACK, ack_after_ms);
    };
    CHECK(run(50).conformant());
    const auto r = run(250);
    REQUIRE(types(r) == std::vector<AlertType>{AlertType::RTT_EXCEEDED});
    CHECK(r.violations[0].reason == "Round trip time 250.000 ms exceeds maximum of 200 ms");
}

TEST_CASE("protocol time windows") {
    const auto sb = testing::testbed_rules();
    const Timestamp sat{*parse_log_time("16.04.2022 10:00:00"), 0};
    const Timestamp tue{*parse_log_time("19.04.2022 10:00:00"), 0};
    CHECK_FALSE(check_protocol_window(gim::Protocol::SSH, sat, sb));
    CHECK(check_protocol_window(gim::Protocol::SSH, tue, sb)->type == AlertType::TIME_WINDOW_VIOLATION);
    CHECK(check_protocol_window(gim::Protocol::MODBUS, sat, sb)->type == AlertType::PROTOCOL_NOT_ALLOWED);
}

TEST_CASE("APDU split across segments is reassembled") {
    Engine eng(testing::testbed_rules());
    Session s{eng, kMtu, kPv12};
    s.start();
    const Bytes full = iec104::encode_apdu(
        iec104::make_i_frame(0, 0, asdu(13, iec104::cot::Spontaneous, 1, 1001, 2.0f)));
    const Bytes head(full.begin(), full.begin() + 5), tail(full.begin() + 5, full.end());
    CHECK(s.raw(false, head, tcp_flag::PSH | tcp_flag::ACK).conformant());
    CHECK(s.raw(false, tail, tcp_flag::PSH | tcp_flag::ACK).conformant());
    const auto* c = eng.connection({kMtu.ip, kMtu.port, kPv12.ip, 2404});
    REQUIRE(c);
    CHECK(c->rtu_counters.vs == 1);
}

TEST_CASE("out-of-order segments are reordered") {
    StreamReassembler r;
    r.on_syn(99);
    const Bytes a = iec104::encode_apdu(iec104::make_u_frame(UFunction::TestFrAct));
    const Bytes b = iec104::encode_apdu(iec104::make_u_frame(UFunction::TestFrCon));
    CHECK(r.push(106, b).empty());
    CHECK(r.pending_segments() == 1);
    const auto frames = r.push(100, a);
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].apdu()->apci.u_function == UFunction::TestFrAct);
    CHECK(frames[1].apdu()->apci.u_function == UFunction::TestFrCon);
}

TEST_CASE("flow violations") {
    Engine eng(testing::testbed_rules());
    Session s{eng, kMtu, kPv12};
    SUBCASE("I-frame before STARTDT") {
        s.handshake();
        const auto r = s.i(false, asdu(13, iec104::cot::Spontaneous, 1, 1001, 2.0f));
        CHECK(types(r) == std::vector<AlertType>{AlertType::AUTOMATA_VIOLATION});
        CHECK(r.violations[0].reason ==
              "MTU automaton rejected RECEIVED_I_FRAME in state IDLE: data transfer before STARTDT");
    }
    SUBCASE("skipped send sequence number") {
        s.start();
        s.rtu_vs = 3;
        const auto r = s.i(false, asdu(13, iec104::cot::Spontaneous, 1, 1001, 2.0f));
        CHECK(types(r) == std::vector<AlertType>{AlertType::SEQUENCE_VIOLATION});
    }
    SUBCASE("missing activation confirmation") {
        s.start();
        CHECK(s.i(true, asdu(100, iec104::cot::Activation, 1, 0, {})).conformant());
        const auto r = s.raw(false, {}, tcp_flag::ACK, 11'000);
        REQUIRE(types(r) == std::vector<AlertType>{AlertType::AUTOMATA_VIOLATION});
    }
    SUBCASE("confirmation without activation") {
        s.start();
        const auto r = s.i(false, asdu(100, iec104::cot::ActivationCon, 1, 0, {}));
        CHECK(types(r) == std::vector<AlertType>{AlertType::AUTOMATA_VIOLATION});
    }
}

TEST_CASE("mid-stream attach") {
    const auto sb = testing::testbed_rules();
    auto run = [&](bool assume_started) {
        EngineOptions o;
        o.assume_started = assume_started;
        Engine eng(sb, o);
        Session s{eng, kMtu, kPv12};
        s.rtu_vs = 40;
        s.mtu_vs = 7;
        return s.i(false, asdu(13, iec104::cot::Spontaneous, 1, 1001, 2.0f));
    };
    CHECK(run(true).conformant());
    CHECK_FALSE(run(false).conformant());
}

TEST_CASE("categories") {
    Engine eng(testing::testbed_rules());
    SUBCASE("non-IPv4 frames are irrelevant") {
        Bytes arp(42, 0);
        arp[12] = 0x08;
        arp[13] = 0x06;
        const auto r = eng.inspect(RawPacket{Timestamp{1, 0}, arp}, 0);
        CHECK(r.category.kind == PacketCategory::Kind::Irrelevant);
        CHECK(r.conformant());
    }
    SUBCASE("corrupted TCP checksum is malformed") {
        auto p = frame(kMtu, kPv12, 1, 0, tcp_flag::SYN, {}, Timestamp{1, 0});
        p.link_bytes.back() ^= 0xFF;
        const auto r = eng.inspect(p, 0);
        CHECK(r.category.kind == PacketCategory::Kind::Malformed);
        CHECK(types(r) == std::vector<AlertType>{AlertType::MALFORMED_PACKET});
    }
    SUBCASE("SSH to an unlisted port") {
        Ep ssh = kPv12;
        ssh.port = 22;
        const auto r = eng.inspect(frame(kMtu, ssh, 1, 0, tcp_flag::SYN, {}, Timestamp{1, 0}), 0);
        CHECK(r.category.kind == PacketCategory::Kind::OtherWhitelistedProtocol);
        CHECK(r.category.protocol == gim::Protocol::SSH);
        CHECK_FALSE(r.conformant());
    }
}

TEST_CASE("disabled domains are not reported") {
    auto sb = testing::testbed_rules();
    sb.domains = {rules::Domain::Communication};
    Engine eng(sb);
    Session s{eng, kMtu, kPv12};
    s.start();
    CHECK(s.i(false, asdu(13, iec104::cot::Spontaneous, 1, 99999, 1.0f)).conformant());
}

TEST_CASE("both directions of a connection map to one shard") {
    const auto a = frame(kMtu, kPv12, 1, 0, tcp_flag::SYN, {}, Timestamp{1, 0});
    const auto b = frame(kPv12, kMtu, 1, 0, tcp_flag::SYN | tcp_flag::ACK, {}, Timestamp{1, 0});
    for (std::size_t n : {2u, 3u, 8u}) CHECK(shard_of(a, n) == shard_of(b, n));
}
