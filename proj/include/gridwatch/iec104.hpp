#pragma once

// IEC 60870-5-104 APCI/ASDU model and codec.
//
// Only a subset of ASDU type identifications is interpreted (see
// `is_supported_type`); other types decode their data unit identifier and
// keep the information-object bytes as an opaque blob.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gridwatch/net.hpp"

namespace gridwatch::iec104 {

inline constexpr std::uint8_t kStartByte = 0x68;
inline constexpr std::uint8_t kMinApduLength = 4;   // length octet value
inline constexpr std::uint8_t kMaxApduLength = 253;
inline constexpr std::uint16_t kSeqModulo = 32768;

enum class FrameFormat : std::uint8_t { I, S, U };

enum class UFunction : std::uint8_t {
    StartDtAct,
    StartDtCon,
    StopDtAct,
    StopDtCon,
    TestFrAct,
    TestFrCon,
};

// Type identifications this codec interprets.
namespace type {
inline constexpr std::uint8_t M_SP_NA_1 = 1;    // single point
inline constexpr std::uint8_t M_ME_NC_1 = 13;   // measured value, short float
inline constexpr std::uint8_t M_ME_TF_1 = 36;   // measured float with CP56Time2a
inline constexpr std::uint8_t C_SC_NA_1 = 45;   // single command
inline constexpr std::uint8_t C_SE_NC_1 = 50;   // set-point command, short float
inline constexpr std::uint8_t C_IC_NA_1 = 100;  // interrogation command
} // namespace type

// Causes of transmission used by the engine and simulators.
namespace cot {
inline constexpr std::uint8_t Periodic = 1;
inline constexpr std::uint8_t Spontaneous = 3;
inline constexpr std::uint8_t Activation = 6;
inline constexpr std::uint8_t ActivationCon = 7;
inline constexpr std::uint8_t Deactivation = 8;
inline constexpr std::uint8_t DeactivationCon = 9;
inline constexpr std::uint8_t ActivationTerm = 10;
inline constexpr std::uint8_t Interrogated = 20;
} // namespace cot

bool is_supported_type(std::uint8_t type_id);
// Process information in monitor direction (<45) vs control direction (45..69).
inline bool is_monitor_type(std::uint8_t type_id) { return type_id > 0 && type_id < 45; }
inline bool is_control_type(std::uint8_t type_id) { return type_id >= 45 && type_id <= 69; }
// Station-level system commands (interrogation and friends, 100..107).
inline bool is_system_command(std::uint8_t type_id) { return type_id >= 100 && type_id <= 107; }
// Byte size of one information element (without IOA) for supported types.
std::size_t element_size(std::uint8_t type_id);

struct Apci {
    FrameFormat format = FrameFormat::U;
    std::optional<std::uint16_t> send_seq;   // I only
    std::optional<std::uint16_t> recv_seq;   // I and S
    std::optional<UFunction> u_function;     // U only
    std::uint8_t length = kMinApduLength;

    bool operator==(const Apci&) const = default;
};

using Value = std::variant<std::monostate, float, bool>;

struct InformationObject {
    std::uint32_t ioa = 0;  // 24 bit
    Value value;
    std::optional<std::uint8_t> qualifier;  // SIQ/QDS/SCO/QOS/QOI depending on type
    std::optional<std::array<std::uint8_t, 7>> time_tag;  // CP56Time2a

    bool operator==(const InformationObject&) const = default;
};

struct Asdu {
    std::uint8_t type_id = 0;
    std::uint8_t num_objects = 0;  // 7 bit
    bool sequence_flag = false;
    std::uint8_t cot = 0;          // 6 bit cause
    bool negative = false;
    bool test = false;
    std::uint8_t originator = 0;
    std::uint16_t common_address = 0;
    std::vector<InformationObject> objects;
    Bytes opaque;  // raw object bytes of unsupported types

    bool supported() const { return is_supported_type(type_id); }
    bool operator==(const Asdu&) const = default;
};

struct Apdu {
    Apci apci;
    std::optional<Asdu> asdu;

    bool operator==(const Apdu&) const = default;
};

struct Malformed {
    std::string layer;
    std::size_t offset = 0;
    std::string reason;
};

// One delimited frame of a TCP payload, decoded or not.
struct Frame {
    std::size_t offset = 0;
    std::size_t size = 0;
    std::variant<Apdu, Malformed> content;

    const Apdu* apdu() const { return std::get_if<Apdu>(&content); }
    const Malformed* error() const { return std::get_if<Malformed>(&content); }
};

struct SplitResult {
    std::vector<Frame> frames;
    // Bytes at the end that form an incomplete APDU. Zero when the payload
    // ends exactly on a frame boundary.
    std::size_t residue = 0;
    // Set when the split had to stop on bytes that cannot start an APDU.
    std::optional<Malformed> desync;
};

class UnsupportedTypeId : public std::runtime_error {
public:
    explicit UnsupportedTypeId(std::uint8_t type_id);
    std::uint8_t type_id;
};

class InvalidApdu : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Decodes a single delimited frame: start byte, length octet, control field
// and, for I-frames, the ASDU.
std::variant<Apdu, Malformed> decode_apdu(ByteView frame, std::size_t base_offset = 0);

// Splits a TCP payload at start-byte/length boundaries and decodes each frame.
SplitResult split_payload(ByteView payload);

Bytes encode_apdu(const Apdu& apdu);
void append_apdu(Bytes& out, const Apdu& apdu);

// Builders that fill in the length octet.
Apdu make_u_frame(UFunction fn);
Apdu make_s_frame(std::uint16_t recv_seq);
Apdu make_i_frame(std::uint16_t send_seq, std::uint16_t recv_seq, Asdu asdu);
std::size_t asdu_encoded_size(const Asdu& asdu);

char format_letter(FrameFormat f);
std::string to_string(UFunction fn);

} // namespace gridwatch::iec104
