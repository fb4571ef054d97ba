#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridwatch/packet.hpp"

namespace gridwatch::pcap {

inline constexpr std::uint32_t kMagicMicro = 0xA1B2C3D4;
inline constexpr std::uint32_t kMagicNano = 0xA1B23C4D;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;

class CaptureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Reads a classic pcap stream (either byte order, micro- or nanosecond
// resolution). Only Ethernet link type is accepted.
std::vector<RawPacket> read(std::istream& in);
std::vector<RawPacket> read_file(const std::string& path);
std::vector<RawPacket> read_bytes(ByteView bytes);

// Writes little-endian nanosecond-resolution pcap.
void write(std::ostream& out, const std::vector<RawPacket>& packets);
void write_file(const std::string& path, const std::vector<RawPacket>& packets);
Bytes write_bytes(const std::vector<RawPacket>& packets);

} // namespace gridwatch::pcap
