#include "gridwatch/automata.hpp"

#include <algorithm>

namespace gridwatch::automata {

namespace {

constexpr std::uint8_t kRecvOffset = 8;

Symbol flip(Symbol s) {
    if (s == Symbol::Error) return s;
    const auto v = static_cast<std::uint8_t>(s);
    return static_cast<Symbol>(v < kRecvOffset ? v + kRecvOffset : v - kRecvOffset);
}

bool in_window(std::uint16_t low, std::uint16_t value, std::uint16_t high) {
    return seq_distance(low, value) <= seq_distance(low, high);
}

// Transition table written from the controlling station's (MTU) side; the
// RTU automaton uses the same table with directions swapped.
Transition mtu_transition(State st, Symbol sym) {
    const auto stay_invalid = [st](std::string reason) { return Transition{st, Status::invalid(std::move(reason))}; };
    const auto go = [](State next) { return Transition{next, Status::valid()}; };

    if (sym == Symbol::Error) return stay_invalid("unmappable frame");
    const FrameKind kind = *kind_of(sym);
    const bool sent = *direction_of(sym) == Direction::Sent;

    if (kind == FrameKind::TestFrAct || kind == FrameKind::TestFrCon) return go(st);

    switch (st) {
    case State::Idle:
        switch (kind) {
        case FrameKind::StartDtAct:
            if (sent) return go(State::StartPending);
            return stay_invalid("STARTDT_ACT issued by the controlled station");
        case FrameKind::StartDtCon: return stay_invalid("STARTDT_CON without pending STARTDT_ACT");
        case FrameKind::StopDtAct: return stay_invalid("STOPDT_ACT while data transfer is stopped");
        case FrameKind::StopDtCon: return stay_invalid("STOPDT_CON without pending STOPDT_ACT");
        case FrameKind::IFrame: return stay_invalid("data transfer before STARTDT");
        case FrameKind::SFrame: return stay_invalid("acknowledgement before STARTDT");
        default: break;
        }
        break;
    case State::StartPending:
        switch (kind) {
        case FrameKind::StartDtCon:
            if (!sent) return go(State::Started);
            return stay_invalid("STARTDT_CON issued by the controlling station");
        case FrameKind::StartDtAct: return stay_invalid("repeated STARTDT_ACT before confirmation");
        case FrameKind::StopDtAct:
        case FrameKind::StopDtCon: return stay_invalid("STOPDT while STARTDT is pending");
        case FrameKind::IFrame: return stay_invalid("data transfer before STARTDT_CON");
        case FrameKind::SFrame: return stay_invalid("acknowledgement before STARTDT_CON");
        default: break;
        }
        break;
    case State::Started:
        switch (kind) {
        case FrameKind::IFrame:
        case FrameKind::SFrame: return go(State::Started);
        case FrameKind::StopDtAct:
            if (sent) return go(State::StopPending);
            return stay_invalid("STOPDT_ACT issued by the controlled station");
        case FrameKind::StopDtCon: return stay_invalid("STOPDT_CON without pending STOPDT_ACT");
        case FrameKind::StartDtAct:
        case FrameKind::StartDtCon: return stay_invalid("STARTDT while data transfer is started");
        default: break;
        }
        break;
    case State::StopPending:
        switch (kind) {
        case FrameKind::StopDtCon:
            if (!sent) return go(State::Idle);
            return stay_invalid("STOPDT_CON issued by the controlling station");
        case FrameKind::IFrame:
            if (!sent) return go(State::StopPending);
            return stay_invalid("I-frame from the controlling station after STOPDT_ACT");
        case FrameKind::SFrame: return go(State::StopPending);
        case FrameKind::StopDtAct: return stay_invalid("repeated STOPDT_ACT before confirmation");
        case FrameKind::StartDtAct:
        case FrameKind::StartDtCon: return stay_invalid("STARTDT while STOPDT is pending");
        default: break;
        }
        break;
    }
    return stay_invalid("undefined transition");
}

} // namespace

Symbol make_symbol(Direction dir, FrameKind kind) {
    const auto k = static_cast<std::uint8_t>(kind);
    return static_cast<Symbol>(dir == Direction::Sent ? k : k + kRecvOffset);
}

std::optional<Direction> direction_of(Symbol s) {
    if (s == Symbol::Error) return std::nullopt;
    return static_cast<std::uint8_t>(s) < kRecvOffset ? Direction::Sent : Direction::Received;
}

std::optional<FrameKind> kind_of(Symbol s) {
    if (s == Symbol::Error) return std::nullopt;
    return static_cast<FrameKind>(static_cast<std::uint8_t>(s) % kRecvOffset);
}

std::string to_string(Symbol s) {
    static constexpr const char* kinds[] = {"STARTDT_ACT", "STARTDT_CON", "STOPDT_ACT", "STOPDT_CON",
                                            "TESTFR_ACT",  "TESTFR_CON",  "I_FRAME",    "S_FRAME"};
    if (s == Symbol::Error) return "ERROR";
    return std::string(*direction_of(s) == Direction::Sent ? "SENT_" : "RECEIVED_") +
           kinds[static_cast<std::size_t>(*kind_of(s))];
}

std::array<Symbol, kSymbolCount> all_symbols() {
    std::array<Symbol, kSymbolCount> out{};
    for (std::size_t i = 0; i < kSymbolCount; ++i) out[i] = static_cast<Symbol>(i);
    return out;
}

std::string to_string(State s) {
    switch (s) {
    case State::Idle: return "IDLE";
    case State::StartPending: return "START_PENDING";
    case State::Started: return "STARTED";
    case State::StopPending: return "STOP_PENDING";
    }
    return "?";
}

std::string to_string(Role r) { return r == Role::MTU ? "MTU" : "RTU"; }

Transition transition(Role role, State state, Symbol sym) {
    return mtu_transition(state, role == Role::MTU ? sym : flip(sym));
}

const Status& Automaton::step(Symbol sym) {
    Transition t = transition(role_, state_, sym);
    state_ = t.next;
    status_ = std::move(t.output);
    return status_;
}

Automaton new_automaton(Role role) { return Automaton(role); }

Symbol map_apdu(const iec104::Apdu& apdu, Direction dir) {
    using iec104::FrameFormat;
    switch (apdu.apci.format) {
    case FrameFormat::I:
        if (!apdu.asdu || !apdu.asdu->supported()) return Symbol::Error;
        return make_symbol(dir, FrameKind::IFrame);
    case FrameFormat::S: return make_symbol(dir, FrameKind::SFrame);
    case FrameFormat::U:
        if (!apdu.apci.u_function) return Symbol::Error;
        switch (*apdu.apci.u_function) {
        case iec104::UFunction::StartDtAct: return make_symbol(dir, FrameKind::StartDtAct);
        case iec104::UFunction::StartDtCon: return make_symbol(dir, FrameKind::StartDtCon);
        case iec104::UFunction::StopDtAct: return make_symbol(dir, FrameKind::StopDtAct);
        case iec104::UFunction::StopDtCon: return make_symbol(dir, FrameKind::StopDtCon);
        case iec104::UFunction::TestFrAct: return make_symbol(dir, FrameKind::TestFrAct);
        case iec104::UFunction::TestFrCon: return make_symbol(dir, FrameKind::TestFrCon);
        }
    }
    return Symbol::Error;
}

std::vector<Symbol> map_frames(const std::vector<iec104::Frame>& frames, Direction dir) {
    std::vector<Symbol> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(f.apdu() ? map_apdu(*f.apdu(), dir) : Symbol::Error);
    return out;
}

std::uint16_t SeqCounters::unacked_sent() const { return seq_distance(ack_in, vs); }
std::uint16_t SeqCounters::unacked_received() const { return seq_distance(ack_out, vr); }

SeqResult check_sequence(SeqCounters& c, const iec104::Apci& apci, Direction dir) {
    using iec104::FrameFormat;
    SeqResult r;
    if (apci.format == FrameFormat::U || !apci.recv_seq) return r;
    const std::uint16_t nr = *apci.recv_seq;
    auto violation = [&](std::uint16_t expected, std::uint16_t got, std::string reason) {
        r.kind = SeqResult::Kind::Violation;
        r.expected = expected;
        r.got = got;
        r.reason = std::move(reason);
        return r;
    };

    if (apci.format == FrameFormat::I) {
        if (!apci.send_seq) return violation(dir == Direction::Sent ? c.vs : c.vr, 0, "I-frame without N(S)");
        const std::uint16_t ns = *apci.send_seq;
        if (dir == Direction::Sent) {
            if (ns != c.vs) return violation(c.vs, ns, "send sequence number");
            if (!in_window(c.ack_out, nr, c.vr)) return violation(c.vr, nr, "acknowledges frames never received");
            c.vs = seq_add(c.vs, 1);
            c.ack_out = nr;
            if (c.unacked_sent() > kWindowK) {
                r.kind = SeqResult::Kind::WindowExceeded;
                r.expected = kWindowK;
                r.got = c.unacked_sent();
                r.reason = "more than k unacknowledged I-frames";
            }
        } else {
            if (ns != c.vr) return violation(c.vr, ns, "send sequence number");
            if (!in_window(c.ack_in, nr, c.vs)) return violation(c.vs, nr, "acknowledges frames never sent");
            c.vr = seq_add(c.vr, 1);
            c.ack_in = nr;
        }
        return r;
    }

    // S-frame: acknowledgement only.
    if (dir == Direction::Sent) {
        if (!in_window(c.ack_out, nr, c.vr)) return violation(c.vr, nr, "acknowledges frames never received");
        c.ack_out = nr;
    } else {
        if (!in_window(c.ack_in, nr, c.vs)) return violation(c.vs, nr, "acknowledges frames never sent");
        c.ack_in = nr;
    }
    return r;
}

void seed_counters(SeqCounters& c, const iec104::Apci& apci, Direction dir) {
    if (c.synced || apci.format != iec104::FrameFormat::I || !apci.send_seq || !apci.recv_seq) return;
    const std::uint16_t ns = *apci.send_seq;
    const std::uint16_t nr = *apci.recv_seq;
    if (dir == Direction::Sent) {
        c.vs = ns;
        c.ack_in = ns;
        c.vr = nr;
        c.ack_out = nr;
    } else {
        c.vr = ns;
        c.ack_out = ns;
        c.vs = nr;
        c.ack_in = nr;
    }
    c.synced = true;
}

Status ActivationLedger::observe(const iec104::Asdu& asdu, Role sender, Timestamp ts) {
    const bool command = iec104::is_control_type(asdu.type_id) || iec104::is_system_command(asdu.type_id);
    if (!command) return Status::valid();

    if (sender == Role::MTU) {
        if (asdu.cot == iec104::cot::Activation)
            for (const auto& obj : asdu.objects)
                entries_.push_back(Entry{asdu.type_id, asdu.common_address, obj.ioa, false, ts});
        return Status::valid();
    }

    const bool con = asdu.cot == iec104::cot::ActivationCon;
    const bool term = asdu.cot == iec104::cot::ActivationTerm;
    if (!con && !term) return Status::valid();
    for (const auto& obj : asdu.objects) {
        auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) {
            return e.type_id == asdu.type_id && e.common_address == asdu.common_address && e.ioa == obj.ioa &&
                   (con ? !e.confirmed : true);
        });
        if (it == entries_.end())
            return Status::suspicious(std::string(con ? "activation confirmation" : "activation termination") +
                                      " without matching activation (type " + std::to_string(asdu.type_id) +
                                      ", IOA " + std::to_string(obj.ioa) + ")");
        // Interrogations end with ACT_TERM; commands are complete once confirmed.
        const bool awaits_term = iec104::is_system_command(asdu.type_id) && con && !asdu.negative;
        if (awaits_term) {
            it->confirmed = true;
            it->since = ts;
        } else {
            entries_.erase(it);
        }
    }
    return Status::valid();
}

std::vector<std::string> ActivationLedger::expire(Timestamp now) {
    std::vector<std::string> expired;
    auto stale = [&](const Entry& e) { return now.ns() - e.since.ns() > deadline_ns_; };
    for (const auto& e : entries_)
        if (stale(e))
            expired.push_back(std::string(e.confirmed ? "activation termination" : "activation confirmation") +
                              " missing for type " + std::to_string(e.type_id) + ", IOA " + std::to_string(e.ioa));
    entries_.erase(std::remove_if(entries_.begin(), entries_.end(), stale), entries_.end());
    return expired;
}

} // namespace gridwatch::automata
