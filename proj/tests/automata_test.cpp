#include <doctest.h>

#include "gridwatch/automata.hpp"
#include "support.hpp"

using namespace gridwatch;
using namespace gridwatch::automata;
using iec104::UFunction;

namespace {

iec104::Apdu i_frame(std::uint16_t ns, std::uint16_t nr) {
    iec104::Asdu a;
    a.type_id = iec104::type::M_ME_NC_1;
    a.cot = iec104::cot::Spontaneous;
    a.common_address = 1;
    iec104::InformationObject o;
    o.ioa = 1;
    o.value = 1.0f;
    o.qualifier = 0;
    a.objects = {o};
    return iec104::make_i_frame(ns, nr, a);
}

// Feeds one frame sent by `sender` to both automata and both counter sets.
struct Link {
    Automaton mtu{Role::MTU};
    Automaton rtu{Role::RTU};
    SeqCounters mtu_c;
    SeqCounters rtu_c;
    int invalid = 0;

    void send(Role sender, const iec104::Apdu& apdu) {
        const bool from_mtu = sender == Role::MTU;
        if (!mtu.step(map_apdu(apdu, from_mtu ? Direction::Sent : Direction::Received)).ok()) ++invalid;
        if (!rtu.step(map_apdu(apdu, from_mtu ? Direction::Received : Direction::Sent)).ok()) ++invalid;
        if (!check_sequence(from_mtu ? mtu_c : rtu_c, apdu.apci, Direction::Sent).ok()) ++invalid;
        if (!check_sequence(from_mtu ? rtu_c : mtu_c, apdu.apci, Direction::Received).ok()) ++invalid;
    }
};

} // namespace

TEST_CASE("alphabet has 8 kinds x 2 directions + ERROR") {
    CHECK(kSymbolCount == kFrameKinds * 2 + 1);
    const auto all = all_symbols();
    CHECK(all.size() == 17);
    CHECK(to_string(Symbol::SentStartDtAct) == "SENT_STARTDT_ACT");
    CHECK(to_string(Symbol::RecvIFrame) == "RECEIVED_I_FRAME");
    CHECK(to_string(Symbol::Error) == "ERROR");
}

TEST_CASE("mapper follows the endpoint's point of view") {
    const auto u = iec104::make_u_frame(UFunction::StartDtAct);
    CHECK(map_apdu(u, Direction::Sent) == Symbol::SentStartDtAct);
    CHECK(map_apdu(u, Direction::Received) == Symbol::RecvStartDtAct);

    Bytes payload = iec104::encode_apdu(i_frame(0, 0));
    iec104::append_apdu(payload, iec104::make_s_frame(1));
    const auto split = iec104::split_payload(payload);
    CHECK(map_frames(split.frames, Direction::Received) ==
          std::vector<Symbol>{Symbol::RecvIFrame, Symbol::RecvSFrame});

    const auto bad = iec104::split_payload(testing::hex("68 03 07 00 00"));
    CHECK(map_frames(bad.frames, Direction::Sent) == std::vector<Symbol>{Symbol::Error});
}

TEST_CASE("fresh automata start idle and are independent") {
    auto m = new_automaton(Role::MTU);
    auto r = new_automaton(Role::RTU);
    CHECK(m.state() == State::Idle);
    CHECK(r.state() == State::Idle);
    m.step(Symbol::SentStartDtAct);
    CHECK(m.state() == State::StartPending);
    CHECK(r.state() == State::Idle);
}

TEST_CASE("MTU STARTDT from IDLE is valid") {
    Automaton m(Role::MTU);
    CHECK(m.step(Symbol::SentStartDtAct).ok());
    CHECK(m.state() == State::StartPending);
}

TEST_CASE("RTU receiving data before STARTDT is invalid") {
    Automaton r(Role::RTU);
    const auto st = r.step(Symbol::RecvIFrame);
    CHECK(st.kind == Status::Kind::Invalid);
    CHECK(st.reason == "data transfer before STARTDT");
    CHECK(r.state() == State::Idle);
}

TEST_CASE("ERROR is invalid in every state") {
    for (auto role : {Role::MTU, Role::RTU})
        for (auto s : {State::Idle, State::StartPending, State::Started, State::StopPending}) {
            const auto t = transition(role, s, Symbol::Error);
            CHECK(t.output.kind == Status::Kind::Invalid);
            CHECK(t.output.reason == "unmappable frame");
            CHECK(t.next == s);
        }
}

TEST_CASE("RTU table is the MTU table with directions swapped") {
    for (auto s : {State::Idle, State::StartPending, State::Started, State::StopPending})
        for (auto sym : all_symbols()) {
            if (sym == Symbol::Error) continue;
            const auto flipped = make_symbol(*direction_of(sym) == Direction::Sent ? Direction::Received
                                                                                   : Direction::Sent,
                                             *kind_of(sym));
            const auto a = transition(Role::MTU, s, sym);
            const auto b = transition(Role::RTU, s, flipped);
            CHECK(a.next == b.next);
            CHECK(a.output.kind == b.output.kind);
        }
}

TEST_CASE("Fig 5 trace is conformant end to end") {
    Link l;
    l.send(Role::MTU, iec104::make_u_frame(UFunction::StartDtAct));
    l.send(Role::RTU, iec104::make_u_frame(UFunction::StartDtCon));
    l.send(Role::MTU, i_frame(0, 0));  // interrogation act
    l.send(Role::RTU, i_frame(0, 1));  // act con
    l.send(Role::RTU, i_frame(1, 1));  // measurements
    l.send(Role::RTU, i_frame(2, 1));
    l.send(Role::RTU, i_frame(3, 1));  // act term
    l.send(Role::MTU, iec104::make_s_frame(4));
    CHECK(l.invalid == 0);
    CHECK(l.mtu.state() == State::Started);
    CHECK(l.rtu.state() == State::Started);
    CHECK(l.mtu_c.unacked_sent() == 0);
    CHECK(l.rtu_c.unacked_sent() == 0);
    CHECK(l.mtu_c.vs == l.rtu_c.vr);
    CHECK(l.rtu_c.vs == l.mtu_c.vr);
}

TEST_CASE("STOPDT closes the connection") {
    Link l;
    l.send(Role::MTU, iec104::make_u_frame(UFunction::StartDtAct));
    l.send(Role::RTU, iec104::make_u_frame(UFunction::StartDtCon));
    l.send(Role::MTU, iec104::make_u_frame(UFunction::StopDtAct));
    CHECK(l.mtu.state() == State::StopPending);
    l.send(Role::RTU, iec104::make_u_frame(UFunction::StopDtCon));
    CHECK(l.invalid == 0);
    CHECK(l.mtu.state() == State::Idle);
    CHECK(l.rtu.state() == State::Idle);
}

TEST_CASE("sequence checks") {
    SUBCASE("first I-frame") {
        SeqCounters c;
        CHECK(check_sequence(c, i_frame(0, 0).apci, Direction::Sent).ok());
        CHECK(c.vs == 1);
    }
    SUBCASE("skipped send number") {
        SeqCounters c;
        const auto r = check_sequence(c, i_frame(5, 0).apci, Direction::Sent);
        CHECK(r.kind == SeqResult::Kind::Violation);
        CHECK(r.expected == 0);
        CHECK(r.got == 5);
        CHECK(c.vs == 0);
    }
    SUBCASE("wrap at 32768") {
        SeqCounters c;
        c.vs = 32767;
        c.ack_in = 32767;
        CHECK(check_sequence(c, i_frame(32767, 0).apci, Direction::Sent).ok());
        CHECK(c.vs == 0);
    }
    SUBCASE("ack of frames never sent") {
        SeqCounters c;
        const auto r = check_sequence(c, iec104::make_s_frame(3).apci, Direction::Received);
        CHECK(r.kind == SeqResult::Kind::Violation);
    }
    SUBCASE("more than k unacknowledged frames is reported") {
        SeqCounters c;
        SeqResult last;
        for (std::uint16_t i = 0; i <= kWindowK; ++i) last = check_sequence(c, i_frame(i, 0).apci, Direction::Sent);
        CHECK(last.kind == SeqResult::Kind::WindowExceeded);
    }
}

TEST_CASE("activation ledger") {
    iec104::Asdu act;
    act.type_id = iec104::type::C_IC_NA_1;
    act.cot = iec104::cot::Activation;
    act.common_address = 1;
    iec104::InformationObject o;
    o.qualifier = 20;
    act.objects = {o};
    auto con = act;
    con.cot = iec104::cot::ActivationCon;
    auto term = act;
    term.cot = iec104::cot::ActivationTerm;
    const Timestamp t0{100, 0};

    SUBCASE("interrogation completes with ACT_CON and ACT_TERM") {
        ActivationLedger l;
        CHECK(l.observe(act, Role::MTU, t0).ok());
        CHECK(l.observe(con, Role::RTU, t0).ok());
        CHECK(l.open() == 1);
        CHECK(l.observe(term, Role::RTU, t0).ok());
        CHECK(l.open() == 0);
    }
    SUBCASE("confirmation without activation is suspicious") {
        ActivationLedger l;
        CHECK(l.observe(con, Role::RTU, t0).kind == Status::Kind::Suspicious);
    }
    SUBCASE("missing confirmation expires after the deadline") {
        ActivationLedger l;
        l.observe(act, Role::MTU, t0);
        CHECK(l.expire(Timestamp{109, 0}).empty());
        CHECK(l.expire(Timestamp{111, 0}).size() == 1);
        CHECK(l.open() == 0);
    }
}
