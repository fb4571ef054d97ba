#include "gridwatch/net.hpp"

#include <charconv>
#include <cstdio>
#include <ctime>

namespace gridwatch {

namespace {

bool parse_uint(std::string_view text, int base, unsigned& out) {
    if (text.empty()) return false;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out, base);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        auto pos = text.find(sep, start);
        parts.push_back(text.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

} // namespace

std::optional<MacAddress> MacAddress::parse(std::string_view text) {
    auto parts = split(text, ':');
    if (parts.size() != 6) return std::nullopt;
    MacAddress mac;
    for (std::size_t i = 0; i < 6; ++i) {
        unsigned v = 0;
        if (parts[i].size() != 2 || !parse_uint(parts[i], 16, v)) return std::nullopt;
        mac.octets[i] = static_cast<std::uint8_t>(v);
    }
    return mac;
}

std::string MacAddress::str() const {
    char buf[18];
    std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", octets[0], octets[1], octets[2],
                  octets[3], octets[4], octets[5]);
    return buf;
}

std::optional<Ipv4Address> Ipv4Address::parse(std::string_view text) {
    auto parts = split(text, '.');
    if (parts.size() != 4) return std::nullopt;
    std::uint32_t value = 0;
    for (auto part : parts) {
        unsigned v = 0;
        if (part.size() > 3 || !parse_uint(part, 10, v) || v > 255) return std::nullopt;
        value = (value << 8) | v;
    }
    return Ipv4Address{value};
}

std::string Ipv4Address::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", value >> 24, (value >> 16) & 0xff,
                  (value >> 8) & 0xff, value & 0xff);
    return buf;
}

std::string format_log_time(std::int64_t epoch_sec) {
    std::time_t t = static_cast<std::time_t>(epoch_sec);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%02d.%02d.%04d %02d:%02d:%02d", tm.tm_mday, tm.tm_mon + 1,
                  tm.tm_year + 1900, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::optional<std::int64_t> parse_log_time(std::string_view text) {
    if (text.size() != 19 || text[2] != '.' || text[5] != '.' || text[10] != ' ' ||
        text[13] != ':' || text[16] != ':')
        return std::nullopt;
    unsigned day, month, year, hour, minute, second;
    if (!parse_uint(text.substr(0, 2), 10, day) || !parse_uint(text.substr(3, 2), 10, month) ||
        !parse_uint(text.substr(6, 4), 10, year) || !parse_uint(text.substr(11, 2), 10, hour) ||
        !parse_uint(text.substr(14, 2), 10, minute) || !parse_uint(text.substr(17, 2), 10, second))
        return std::nullopt;
    if (day < 1 || day > 31 || month < 1 || month > 12 || hour > 23 || minute > 59 || second > 60)
        return std::nullopt;
    std::tm tm{};
    tm.tm_mday = static_cast<int>(day);
    tm.tm_mon = static_cast<int>(month) - 1;
    tm.tm_year = static_cast<int>(year) - 1900;
    tm.tm_hour = static_cast<int>(hour);
    tm.tm_min = static_cast<int>(minute);
    tm.tm_sec = static_cast<int>(second);
    return static_cast<std::int64_t>(timegm(&tm));
}

std::uint16_t internet_checksum(ByteView data, std::uint32_t initial) {
    std::uint64_t sum = initial;
    std::size_t i = 0;
    for (; i + 1 < data.size(); i += 2) sum += (std::uint32_t{data[i]} << 8) | data[i + 1];
    if (i < data.size()) sum += std::uint32_t{data[i]} << 8;
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum & 0xffff);
}

} // namespace gridwatch
