#pragma once

// Role-based Mealy automata for IEC 60870-5-104 flow conformance.
//
// Each monitored connection runs one automaton per endpoint (MTU and RTU).
// Frames are mapped to direction-prefixed symbols from the point of view of
// the automaton's endpoint: a frame emitted by the MTU is SENT_* for the MTU
// automaton and RECEIVED_* for the RTU automaton.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridwatch/iec104.hpp"
#include "gridwatch/net.hpp"

namespace gridwatch::automata {

enum class Role : std::uint8_t { MTU, RTU };
enum class Direction : std::uint8_t { Sent, Received };

enum class FrameKind : std::uint8_t {
    StartDtAct,
    StartDtCon,
    StopDtAct,
    StopDtCon,
    TestFrAct,
    TestFrCon,
    IFrame,
    SFrame,
};
inline constexpr std::size_t kFrameKinds = 8;

// 8 frame kinds x 2 directions + ERROR.
enum class Symbol : std::uint8_t {
    SentStartDtAct, SentStartDtCon, SentStopDtAct, SentStopDtCon,
    SentTestFrAct, SentTestFrCon, SentIFrame, SentSFrame,
    RecvStartDtAct, RecvStartDtCon, RecvStopDtAct, RecvStopDtCon,
    RecvTestFrAct, RecvTestFrCon, RecvIFrame, RecvSFrame,
    Error,
};
inline constexpr std::size_t kSymbolCount = 17;

Symbol make_symbol(Direction dir, FrameKind kind);
std::optional<Direction> direction_of(Symbol s);
std::optional<FrameKind> kind_of(Symbol s);
std::string to_string(Symbol s);
std::array<Symbol, kSymbolCount> all_symbols();

enum class State : std::uint8_t { Idle, StartPending, Started, StopPending };
inline constexpr std::size_t kStateCount = 4;
std::string to_string(State s);
std::string to_string(Role r);

struct Status {
    enum class Kind : std::uint8_t { Valid, Invalid, Suspicious };
    Kind kind = Kind::Valid;
    std::string reason;

    static Status valid() { return {}; }
    static Status invalid(std::string r) { return {Kind::Invalid, std::move(r)}; }
    static Status suspicious(std::string r) { return {Kind::Suspicious, std::move(r)}; }
    bool ok() const { return kind == Kind::Valid; }
};

class Automaton {
public:
    explicit Automaton(Role role, State initial = State::Idle) : role_(role), state_(initial) {}

    // Applies one symbol. The returned status is also kept as the Mealy
    // output of this step; it is overwritten on the next step.
    const Status& step(Symbol sym);

    Role role() const { return role_; }
    State state() const { return state_; }
    const Status& status() const { return status_; }

private:
    Role role_;
    State state_;
    Status status_;
};

Automaton new_automaton(Role role);

// Pure transition function shared by step() and the totality tests.
struct Transition {
    State next;
    Status output;
};
Transition transition(Role role, State state, Symbol sym);

// Maps the frames of one segment to symbols, in wire order. Undecodable or
// unsupported-type frames map to ERROR.
std::vector<Symbol> map_frames(const std::vector<iec104::Frame>& frames, Direction dir);
Symbol map_apdu(const iec104::Apdu& apdu, Direction dir);

// Window parameters: k = max unacknowledged I-frames, w = ack latency.
inline constexpr std::uint16_t kWindowK = 12;
inline constexpr std::uint16_t kWindowW = 8;

// Send/receive state variables of one endpoint, modulo 32768.
struct SeqCounters {
    std::uint16_t vs = 0;          // next send sequence number
    std::uint16_t vr = 0;          // next expected receive sequence number
    std::uint16_t ack_in = 0;      // highest of our frames the peer acknowledged
    std::uint16_t ack_out = 0;     // highest peer frame we acknowledged
    bool synced = true;            // false until seeded from traffic (mid-stream attach)

    std::uint16_t unacked_sent() const;
    std::uint16_t unacked_received() const;
    bool operator==(const SeqCounters&) const = default;
};

struct SeqResult {
    enum class Kind : std::uint8_t { Ok, Violation, WindowExceeded };
    Kind kind = Kind::Ok;
    std::uint16_t expected = 0;
    std::uint16_t got = 0;
    std::string reason;

    bool ok() const { return kind == Kind::Ok; }
};

// Validates an I- or S-frame against one endpoint's counters, `dir` being
// relative to that endpoint. Counters change only when the frame conforms
// (window overruns are reported but still applied).
SeqResult check_sequence(SeqCounters& c, const iec104::Apci& apci, Direction dir);

// Seeds counters from the first I-frame seen when attaching mid-stream.
void seed_counters(SeqCounters& c, const iec104::Apci& apci, Direction dir);

inline std::uint16_t seq_add(std::uint16_t a, std::uint32_t n) {
    return static_cast<std::uint16_t>((a + n) % iec104::kSeqModulo);
}
inline std::uint16_t seq_distance(std::uint16_t from, std::uint16_t to) {
    return static_cast<std::uint16_t>((to + iec104::kSeqModulo - from) % iec104::kSeqModulo);
}

// Outstanding activations (interrogation, commands) waiting for their
// confirmation from the controlled station.
class ActivationLedger {
public:
    static constexpr std::int64_t kDefaultDeadlineNs = 10'000'000'000;

    explicit ActivationLedger(std::int64_t deadline_ns = kDefaultDeadlineNs) : deadline_ns_(deadline_ns) {}

    // Feeds an ASDU emitted by `sender`. Returns a suspicious status for
    // confirmations that match no open activation.
    Status observe(const iec104::Asdu& asdu, Role sender, Timestamp ts);
    // Drops and reports activations older than the deadline.
    std::vector<std::string> expire(Timestamp now);
    std::size_t open() const { return entries_.size(); }

private:
    struct Entry {
        std::uint8_t type_id;
        std::uint16_t common_address;
        std::uint32_t ioa;
        bool confirmed;
        Timestamp since;
    };
    std::int64_t deadline_ns_;
    std::vector<Entry> entries_;
};

} // namespace gridwatch::automata
