#include "gridwatch/iec104.hpp"

#include <bit>

namespace gridwatch::iec104 {

namespace {

constexpr std::uint8_t kUStartDtAct = 0x07;
constexpr std::uint8_t kUStartDtCon = 0x0B;
constexpr std::uint8_t kUStopDtAct = 0x13;
constexpr std::uint8_t kUStopDtCon = 0x23;
constexpr std::uint8_t kUTestFrAct = 0x43;
constexpr std::uint8_t kUTestFrCon = 0x83;

constexpr std::size_t kAsduHeaderSize = 6;
constexpr std::size_t kIoaSize = 3;

std::optional<UFunction> u_function_from_octet(std::uint8_t octet) {
    switch (octet) {
    case kUStartDtAct: return UFunction::StartDtAct;
    case kUStartDtCon: return UFunction::StartDtCon;
    case kUStopDtAct: return UFunction::StopDtAct;
    case kUStopDtCon: return UFunction::StopDtCon;
    case kUTestFrAct: return UFunction::TestFrAct;
    case kUTestFrCon: return UFunction::TestFrCon;
    default: return std::nullopt;
    }
}

std::uint8_t u_function_octet(UFunction fn) {
    switch (fn) {
    case UFunction::StartDtAct: return kUStartDtAct;
    case UFunction::StartDtCon: return kUStartDtCon;
    case UFunction::StopDtAct: return kUStopDtAct;
    case UFunction::StopDtCon: return kUStopDtCon;
    case UFunction::TestFrAct: return kUTestFrAct;
    case UFunction::TestFrCon: return kUTestFrCon;
    }
    return 0;
}

float load_float_le(ByteView b, std::size_t off) {
    std::uint32_t raw = std::uint32_t{b[off]} | (std::uint32_t{b[off + 1]} << 8) |
                        (std::uint32_t{b[off + 2]} << 16) | (std::uint32_t{b[off + 3]} << 24);
    return std::bit_cast<float>(raw);
}

void store_float_le(Bytes& out, float v) {
    auto raw = std::bit_cast<std::uint32_t>(v);
    for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(raw >> shift));
}

std::uint32_t load_ioa(ByteView b, std::size_t off) {
    return std::uint32_t{b[off]} | (std::uint32_t{b[off + 1]} << 8) | (std::uint32_t{b[off + 2]} << 16);
}

void store_ioa(Bytes& out, std::uint32_t ioa) {
    out.push_back(static_cast<std::uint8_t>(ioa));
    out.push_back(static_cast<std::uint8_t>(ioa >> 8));
    out.push_back(static_cast<std::uint8_t>(ioa >> 16));
}

// Decodes one information element of a supported type at `off`.
InformationObject decode_element(std::uint8_t type_id, std::uint32_t ioa, ByteView b, std::size_t off) {
    InformationObject obj;
    obj.ioa = ioa;
    switch (type_id) {
    case type::M_SP_NA_1:
    case type::C_SC_NA_1:
        obj.value = static_cast<bool>(b[off] & 0x01);
        obj.qualifier = static_cast<std::uint8_t>(b[off] & 0xFE);
        break;
    case type::M_ME_NC_1:
    case type::C_SE_NC_1:
        obj.value = load_float_le(b, off);
        obj.qualifier = b[off + 4];
        break;
    case type::M_ME_TF_1: {
        obj.value = load_float_le(b, off);
        obj.qualifier = b[off + 4];
        std::array<std::uint8_t, 7> tag{};
        for (std::size_t i = 0; i < 7; ++i) tag[i] = b[off + 5 + i];
        obj.time_tag = tag;
        break;
    }
    case type::C_IC_NA_1:
        obj.qualifier = b[off];
        break;
    default:
        break;
    }
    return obj;
}

void encode_element(Bytes& out, std::uint8_t type_id, const InformationObject& obj) {
    auto require_float = [&]() {
        const float* v = std::get_if<float>(&obj.value);
        if (!v) throw InvalidApdu("type " + std::to_string(type_id) + " needs a float value");
        return *v;
    };
    auto require_bool = [&]() {
        const bool* v = std::get_if<bool>(&obj.value);
        if (!v) throw InvalidApdu("type " + std::to_string(type_id) + " needs a boolean value");
        return *v;
    };
    std::uint8_t qual = obj.qualifier.value_or(0);
    switch (type_id) {
    case type::M_SP_NA_1:
    case type::C_SC_NA_1:
        if (qual & 0x01) throw InvalidApdu("qualifier bit 0 is reserved for the state");
        out.push_back(static_cast<std::uint8_t>(qual | (require_bool() ? 1 : 0)));
        break;
    case type::M_ME_NC_1:
    case type::C_SE_NC_1:
        store_float_le(out, require_float());
        out.push_back(qual);
        break;
    case type::M_ME_TF_1: {
        store_float_le(out, require_float());
        out.push_back(qual);
        if (!obj.time_tag) throw InvalidApdu("type 36 needs a CP56Time2a tag");
        out.insert(out.end(), obj.time_tag->begin(), obj.time_tag->end());
        break;
    }
    case type::C_IC_NA_1:
        if (!std::holds_alternative<std::monostate>(obj.value))
            throw InvalidApdu("interrogation carries no value");
        out.push_back(qual);
        break;
    default:
        throw UnsupportedTypeId(type_id);
    }
}

Malformed malformed(std::size_t offset, std::string reason, std::string layer = "IEC104") {
    return Malformed{std::move(layer), offset, std::move(reason)};
}

std::variant<Asdu, Malformed> decode_asdu(ByteView b, std::size_t base_offset) {
    if (b.size() < kAsduHeaderSize) return malformed(base_offset, "ASDU shorter than its header");
    Asdu asdu;
    asdu.type_id = b[0];
    asdu.sequence_flag = (b[1] & 0x80) != 0;
    asdu.num_objects = b[1] & 0x7F;
    asdu.test = (b[2] & 0x80) != 0;
    asdu.negative = (b[2] & 0x40) != 0;
    asdu.cot = b[2] & 0x3F;
    asdu.originator = b[3];
    asdu.common_address = static_cast<std::uint16_t>(b[4] | (b[5] << 8));

    if (asdu.type_id == 0) return malformed(base_offset, "type identification 0 is undefined");
    if (asdu.num_objects == 0) return malformed(base_offset + 1, "ASDU without information objects");

    if (!asdu.supported()) {
        asdu.opaque.assign(b.begin() + kAsduHeaderSize, b.end());
        return asdu;
    }

    const std::size_t elem = element_size(asdu.type_id);
    const std::size_t n = asdu.num_objects;
    const std::size_t body = b.size() - kAsduHeaderSize;
    const std::size_t expected = asdu.sequence_flag ? kIoaSize + n * elem : n * (kIoaSize + elem);
    if (body != expected)
        return malformed(base_offset + kAsduHeaderSize,
                         "information object bytes " + std::to_string(body) + " != expected " +
                             std::to_string(expected));

    std::size_t off = kAsduHeaderSize;
    if (asdu.sequence_flag) {
        std::uint32_t first = load_ioa(b, off);
        off += kIoaSize;
        if (first + n - 1 > 0xFFFFFF) return malformed(base_offset + off, "IOA sequence overflows 24 bits");
        for (std::size_t i = 0; i < n; ++i, off += elem)
            asdu.objects.push_back(decode_element(asdu.type_id, first + static_cast<std::uint32_t>(i), b, off));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t ioa = load_ioa(b, off);
            off += kIoaSize;
            asdu.objects.push_back(decode_element(asdu.type_id, ioa, b, off));
            off += elem;
        }
    }
    return asdu;
}

} // namespace

UnsupportedTypeId::UnsupportedTypeId(std::uint8_t id)
    : std::runtime_error("unsupported ASDU type id " + std::to_string(id)), type_id(id) {}

bool is_supported_type(std::uint8_t type_id) {
    switch (type_id) {
    case type::M_SP_NA_1:
    case type::M_ME_NC_1:
    case type::M_ME_TF_1:
    case type::C_SC_NA_1:
    case type::C_SE_NC_1:
    case type::C_IC_NA_1: return true;
    default: return false;
    }
}

std::size_t element_size(std::uint8_t type_id) {
    switch (type_id) {
    case type::M_SP_NA_1: return 1;
    case type::M_ME_NC_1: return 5;
    case type::M_ME_TF_1: return 12;
    case type::C_SC_NA_1: return 1;
    case type::C_SE_NC_1: return 5;
    case type::C_IC_NA_1: return 1;
    default: return 0;
    }
}

std::variant<Apdu, Malformed> decode_apdu(ByteView f, std::size_t base) {
    if (f.size() < 2) return malformed(base, "frame shorter than start byte and length");
    if (f[0] != kStartByte) return malformed(base, "missing start byte 0x68");
    const std::uint8_t length = f[1];
    if (length < kMinApduLength || length > kMaxApduLength)
        return malformed(base + 1, "APDU length " + std::to_string(length) + " outside [4, 253]");
    if (f.size() != std::size_t{length} + 2)
        return malformed(base + 1, "frame size does not match length octet");

    Apdu apdu;
    apdu.apci.length = length;
    const std::uint8_t c1 = f[2], c2 = f[3], c3 = f[4], c4 = f[5];

    if ((c1 & 0x01) == 0) {
        if (c3 & 0x01) return malformed(base + 4, "I-frame receive sequence LSB must be 0");
        apdu.apci.format = FrameFormat::I;
        apdu.apci.send_seq = static_cast<std::uint16_t>(((c2 << 8) | c1) >> 1);
        apdu.apci.recv_seq = static_cast<std::uint16_t>(((c4 << 8) | c3) >> 1);
        if (length == kMinApduLength) return malformed(base + 2, "I-frame without ASDU");
        auto asdu = decode_asdu(f.subspan(6), base + 6);
        if (auto* err = std::get_if<Malformed>(&asdu)) return *err;
        apdu.asdu = std::move(std::get<Asdu>(asdu));
        return apdu;
    }
    if ((c1 & 0x03) == 0x01) {
        if (c1 != 0x01 || c2 != 0 || (c3 & 0x01)) return malformed(base + 2, "reserved S-frame control bits set");
        if (length != kMinApduLength) return malformed(base + 1, "S-frame must have length 4");
        apdu.apci.format = FrameFormat::S;
        apdu.apci.recv_seq = static_cast<std::uint16_t>(((c4 << 8) | c3) >> 1);
        return apdu;
    }
    auto fn = u_function_from_octet(c1);
    if (!fn || c2 != 0 || c3 != 0 || c4 != 0)
        return malformed(base + 2, "U-frame control field is not a single defined function");
    if (length != kMinApduLength) return malformed(base + 1, "U-frame must have length 4");
    apdu.apci.format = FrameFormat::U;
    apdu.apci.u_function = fn;
    return apdu;
}

SplitResult split_payload(ByteView payload) {
    SplitResult result;
    std::size_t off = 0;
    while (off < payload.size()) {
        const std::size_t remaining = payload.size() - off;
        if (payload[off] != kStartByte) {
            result.desync = malformed(off, "expected start byte 0x68");
            break;
        }
        if (remaining < 2) {
            result.residue = remaining;
            break;
        }
        const std::uint8_t length = payload[off + 1];
        if (length < kMinApduLength || length > kMaxApduLength) {
            // Cannot delimit the next frame reliably; consume the rest as one bad frame.
            result.frames.push_back(Frame{off, remaining,
                                          malformed(off + 1, "APDU length " + std::to_string(length) +
                                                                 " outside [4, 253]")});
            break;
        }
        const std::size_t frame_size = std::size_t{length} + 2;
        if (remaining < frame_size) {
            result.residue = remaining;
            break;
        }
        auto decoded = decode_apdu(payload.subspan(off, frame_size), off);
        Frame frame{off, frame_size, {}};
        if (auto* apdu = std::get_if<Apdu>(&decoded))
            frame.content = std::move(*apdu);
        else
            frame.content = std::get<Malformed>(decoded);
        result.frames.push_back(std::move(frame));
        off += frame_size;
    }
    return result;
}

std::size_t asdu_encoded_size(const Asdu& asdu) {
    if (!asdu.supported()) return kAsduHeaderSize + asdu.opaque.size();
    const std::size_t n = asdu.objects.size();
    const std::size_t elem = element_size(asdu.type_id);
    if (n == 0) return kAsduHeaderSize;
    return kAsduHeaderSize + (asdu.sequence_flag ? kIoaSize + n * elem : n * (kIoaSize + elem));
}

void append_apdu(Bytes& out, const Apdu& apdu) {
    const Apci& apci = apdu.apci;
    const std::size_t start = out.size();
    out.push_back(kStartByte);
    out.push_back(apci.length);
    switch (apci.format) {
    case FrameFormat::I: {
        if (!apci.send_seq || !apci.recv_seq || apci.u_function || !apdu.asdu)
            throw InvalidApdu("I-frame needs send/receive sequence numbers and an ASDU");
        if (*apci.send_seq >= kSeqModulo || *apci.recv_seq >= kSeqModulo)
            throw InvalidApdu("sequence number exceeds 15 bits");
        const std::uint16_t ns = static_cast<std::uint16_t>(*apci.send_seq << 1);
        const std::uint16_t nr = static_cast<std::uint16_t>(*apci.recv_seq << 1);
        out.push_back(static_cast<std::uint8_t>(ns));
        out.push_back(static_cast<std::uint8_t>(ns >> 8));
        out.push_back(static_cast<std::uint8_t>(nr));
        out.push_back(static_cast<std::uint8_t>(nr >> 8));

        const Asdu& asdu = *apdu.asdu;
        if (!asdu.supported()) {
            out.resize(start);
            throw UnsupportedTypeId(asdu.type_id);
        }
        if (asdu.num_objects == 0 || asdu.num_objects > 127) throw InvalidApdu("num_objects outside [1, 127]");
        if (asdu.cot > 0x3F) throw InvalidApdu("cause of transmission exceeds 6 bits");
        out.push_back(asdu.type_id);
        out.push_back(static_cast<std::uint8_t>((asdu.sequence_flag ? 0x80 : 0) | asdu.num_objects));
        out.push_back(static_cast<std::uint8_t>((asdu.test ? 0x80 : 0) | (asdu.negative ? 0x40 : 0) | asdu.cot));
        out.push_back(asdu.originator);
        out.push_back(static_cast<std::uint8_t>(asdu.common_address));
        out.push_back(static_cast<std::uint8_t>(asdu.common_address >> 8));
        if (asdu.objects.size() != asdu.num_objects) throw InvalidApdu("num_objects does not match objects");
        if (asdu.sequence_flag) {
            store_ioa(out, asdu.objects.front().ioa);
            for (std::size_t i = 0; i < asdu.objects.size(); ++i) {
                if (asdu.objects[i].ioa != asdu.objects.front().ioa + i)
                    throw InvalidApdu("sequence ASDU needs consecutive IOAs");
                encode_element(out, asdu.type_id, asdu.objects[i]);
            }
        } else {
            for (const auto& obj : asdu.objects) {
                if (obj.ioa > 0xFFFFFF) throw InvalidApdu("IOA exceeds 24 bits");
                store_ioa(out, obj.ioa);
                encode_element(out, asdu.type_id, obj);
            }
        }
        break;
    }
    case FrameFormat::S: {
        if (!apci.recv_seq || apci.send_seq || apci.u_function || apdu.asdu)
            throw InvalidApdu("S-frame carries only a receive sequence number");
        if (*apci.recv_seq >= kSeqModulo) throw InvalidApdu("sequence number exceeds 15 bits");
        const std::uint16_t nr = static_cast<std::uint16_t>(*apci.recv_seq << 1);
        out.push_back(0x01);
        out.push_back(0x00);
        out.push_back(static_cast<std::uint8_t>(nr));
        out.push_back(static_cast<std::uint8_t>(nr >> 8));
        break;
    }
    case FrameFormat::U: {
        if (!apci.u_function || apci.send_seq || apci.recv_seq || apdu.asdu)
            throw InvalidApdu("U-frame carries only a function");
        out.push_back(u_function_octet(*apci.u_function));
        out.push_back(0);
        out.push_back(0);
        out.push_back(0);
        break;
    }
    }
    if (out.size() - start != std::size_t{apci.length} + 2) {
        out.resize(start);
        throw InvalidApdu("length octet does not match encoded size");
    }
}

Bytes encode_apdu(const Apdu& apdu) {
    Bytes out;
    append_apdu(out, apdu);
    return out;
}

Apdu make_u_frame(UFunction fn) {
    Apdu a;
    a.apci.format = FrameFormat::U;
    a.apci.u_function = fn;
    a.apci.length = kMinApduLength;
    return a;
}

Apdu make_s_frame(std::uint16_t recv_seq) {
    Apdu a;
    a.apci.format = FrameFormat::S;
    a.apci.recv_seq = recv_seq;
    a.apci.length = kMinApduLength;
    return a;
}

Apdu make_i_frame(std::uint16_t send_seq, std::uint16_t recv_seq, Asdu asdu) {
    Apdu a;
    a.apci.format = FrameFormat::I;
    a.apci.send_seq = send_seq;
    a.apci.recv_seq = recv_seq;
    asdu.num_objects = static_cast<std::uint8_t>(asdu.supported() ? asdu.objects.size() : asdu.num_objects);
    const std::size_t size = 4 + asdu_encoded_size(asdu);
    if (size > kMaxApduLength) throw InvalidApdu("ASDU too large for one APDU");
    a.apci.length = static_cast<std::uint8_t>(size);
    a.asdu = std::move(asdu);
    return a;
}

char format_letter(FrameFormat f) {
    switch (f) {
    case FrameFormat::I: return 'I';
    case FrameFormat::S: return 'S';
    case FrameFormat::U: return 'U';
    }
    return '?';
}

std::string to_string(UFunction fn) {
    switch (fn) {
    case UFunction::StartDtAct: return "STARTDT_ACT";
    case UFunction::StartDtCon: return "STARTDT_CON";
    case UFunction::StopDtAct: return "STOPDT_ACT";
    case UFunction::StopDtCon: return "STOPDT_CON";
    case UFunction::TestFrAct: return "TESTFR_ACT";
    case UFunction::TestFrCon: return "TESTFR_CON";
    }
    return "?";
}

} // namespace gridwatch::iec104
