#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gridwatch {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

struct MacAddress {
    std::array<std::uint8_t, 6> octets{};

    static std::optional<MacAddress> parse(std::string_view text);
    std::string str() const;

    auto operator<=>(const MacAddress&) const = default;
};

struct Ipv4Address {
    std::uint32_t value = 0; // host order

    static std::optional<Ipv4Address> parse(std::string_view text);
    static Ipv4Address from_octets(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
        return Ipv4Address{(std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) |
                           (std::uint32_t{c} << 8) | std::uint32_t{d}};
    }
    std::string str() const;

    auto operator<=>(const Ipv4Address&) const = default;
};

// Seconds + nanoseconds since the Unix epoch.
struct Timestamp {
    std::int64_t sec = 0;
    std::uint32_t nsec = 0;

    static Timestamp from_ns(std::int64_t ns) {
        return Timestamp{ns / 1'000'000'000, static_cast<std::uint32_t>(ns % 1'000'000'000)};
    }
    std::int64_t ns() const { return sec * 1'000'000'000 + nsec; }
    double ms_since(const Timestamp& earlier) const {
        return static_cast<double>(ns() - earlier.ns()) / 1e6;
    }

    auto operator<=>(const Timestamp&) const = default;
};

// "DD.MM.YYYY HH:MM:SS" in UTC.
std::string format_log_time(std::int64_t epoch_sec);
std::optional<std::int64_t> parse_log_time(std::string_view text);

// Big-endian / little-endian helpers over spans. Callers check bounds.
inline std::uint16_t load_be16(ByteView b, std::size_t off) {
    return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}
inline std::uint32_t load_be32(ByteView b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
           (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}
inline void store_be16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}
inline void store_be32(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

// RFC 1071 ones-complement sum, folded and inverted.
std::uint16_t internet_checksum(ByteView data, std::uint32_t initial = 0);

} // namespace gridwatch
