#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridwatch/iec104.hpp"
#include "gridwatch/net.hpp"

namespace gridwatch {

struct RawPacket {
    Timestamp ts;
    Bytes link_bytes;  // Ethernet II frame
};

namespace tcp_flag {
inline constexpr std::uint8_t FIN = 0x01;
inline constexpr std::uint8_t SYN = 0x02;
inline constexpr std::uint8_t RST = 0x04;
inline constexpr std::uint8_t PSH = 0x08;
inline constexpr std::uint8_t ACK = 0x10;
} // namespace tcp_flag

struct EthernetLayer {
    MacAddress src_mac;
    MacAddress dst_mac;
    std::uint16_t ether_type = 0;
};

struct Ipv4Layer {
    Ipv4Address src_ip;
    Ipv4Address dst_ip;
    std::uint8_t protocol = 0;
    std::uint16_t checksum = 0;
    bool checksum_ok = true;
};

struct TcpLayer {
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint8_t flags = 0;
    std::uint16_t checksum = 0;
    bool checksum_ok = true;
    Bytes payload;

    bool has(std::uint8_t flag) const { return (flags & flag) != 0; }
    // Sequence space consumed by this segment (payload plus SYN/FIN).
    std::uint32_t seq_length() const {
        return static_cast<std::uint32_t>(payload.size()) + (has(tcp_flag::SYN) ? 1 : 0) +
               (has(tcp_flag::FIN) ? 1 : 0);
    }
};

struct PacketLayers {
    std::optional<EthernetLayer> eth;
    std::optional<Ipv4Layer> ip;
    std::optional<TcpLayer> tcp;
    // Frames found in this segment's payload alone (no reassembly).
    std::vector<iec104::Frame> iec104;
    std::size_t iec104_residue = 0;
    std::vector<iec104::Malformed> diagnostics;

    bool looks_like_iec104() const {
        return tcp && !tcp->payload.empty() && tcp->payload.front() == iec104::kStartByte;
    }
};

PacketLayers decode_packet(const RawPacket& raw);

// "ETH / IP / TCP" style chain of the layers present.
std::string layer_chain(const PacketLayers& layers);

// Parameters for synthesizing one Ethernet/IPv4/TCP frame with valid checksums.
struct TcpFrameSpec {
    MacAddress src_mac;
    MacAddress dst_mac;
    Ipv4Address src_ip;
    Ipv4Address dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint8_t flags = tcp_flag::ACK;
    std::uint16_t window = 8192;
    std::uint16_t ip_id = 0;
    std::uint8_t ttl = 64;
};

Bytes build_tcp_frame(const TcpFrameSpec& spec, ByteView payload);

} // namespace gridwatch
