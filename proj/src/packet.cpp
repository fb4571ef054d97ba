#include "gridwatch/packet.hpp"

namespace gridwatch {

namespace {

constexpr std::size_t kEthHeader = 14;
constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
constexpr std::uint8_t kProtoTcp = 6;

std::uint32_t pseudo_header_sum(Ipv4Address src, Ipv4Address dst, std::size_t tcp_length) {
    std::uint32_t sum = 0;
    sum += src.value >> 16;
    sum += src.value & 0xffff;
    sum += dst.value >> 16;
    sum += dst.value & 0xffff;
    sum += kProtoTcp;
    sum += static_cast<std::uint32_t>(tcp_length);
    return sum;
}

} // namespace

PacketLayers decode_packet(const RawPacket& raw) {
    PacketLayers layers;
    ByteView b(raw.link_bytes);
    auto fail = [&](const char* layer, std::size_t offset, std::string reason) {
        layers.diagnostics.push_back(iec104::Malformed{layer, offset, std::move(reason)});
        return layers;
    };

    if (b.size() < kEthHeader) return fail("ETH", 0, "frame shorter than Ethernet header");
    EthernetLayer eth;
    std::copy_n(b.begin(), 6, eth.dst_mac.octets.begin());
    std::copy_n(b.begin() + 6, 6, eth.src_mac.octets.begin());
    eth.ether_type = load_be16(b, 12);
    layers.eth = eth;
    if (eth.ether_type != kEtherTypeIpv4) return layers;

    ByteView ip_bytes = b.subspan(kEthHeader);
    if (ip_bytes.size() < 20) return fail("IP", kEthHeader, "truncated IPv4 header");
    const std::uint8_t version = ip_bytes[0] >> 4;
    const std::size_t ihl = std::size_t{ip_bytes[0] & 0x0fu} * 4;
    if (version != 4) return fail("IP", kEthHeader, "IP version is not 4");
    if (ihl < 20 || ihl > ip_bytes.size()) return fail("IP", kEthHeader, "bad IPv4 header length");
    const std::size_t total_length = load_be16(ip_bytes, 2);
    if (total_length < ihl || total_length > ip_bytes.size())
        return fail("IP", kEthHeader + 2, "IPv4 total length exceeds frame");
    ip_bytes = ip_bytes.first(total_length);  // drop Ethernet padding

    Ipv4Layer ip;
    ip.protocol = ip_bytes[9];
    ip.checksum = load_be16(ip_bytes, 10);
    ip.src_ip = Ipv4Address{load_be32(ip_bytes, 12)};
    ip.dst_ip = Ipv4Address{load_be32(ip_bytes, 16)};
    ip.checksum_ok = internet_checksum(ip_bytes.first(ihl)) == 0;
    layers.ip = ip;
    if (ip.protocol != kProtoTcp) return layers;
    const std::uint16_t frag = load_be16(ip_bytes, 6);
    if ((frag & 0x1fff) != 0 || (frag & 0x2000) != 0)
        return fail("IP", kEthHeader + 6, "fragmented IPv4 datagrams are not reassembled");

    ByteView seg = ip_bytes.subspan(ihl);
    const std::size_t tcp_base = kEthHeader + ihl;
    if (seg.size() < 20) return fail("TCP", tcp_base, "truncated TCP header");
    const std::size_t data_offset = static_cast<std::size_t>(seg[12] >> 4) * 4;
    if (data_offset < 20 || data_offset > seg.size()) return fail("TCP", tcp_base + 12, "bad TCP data offset");

    TcpLayer tcp;
    tcp.src_port = load_be16(seg, 0);
    tcp.dst_port = load_be16(seg, 2);
    tcp.seq = load_be32(seg, 4);
    tcp.ack = load_be32(seg, 8);
    tcp.flags = seg[13];
    tcp.checksum = load_be16(seg, 16);
    tcp.checksum_ok = internet_checksum(seg, pseudo_header_sum(ip.src_ip, ip.dst_ip, seg.size())) == 0;
    tcp.payload.assign(seg.begin() + static_cast<std::ptrdiff_t>(data_offset), seg.end());
    layers.tcp = std::move(tcp);

    if (layers.looks_like_iec104()) {
        auto split = iec104::split_payload(layers.tcp->payload);
        layers.iec104 = std::move(split.frames);
        layers.iec104_residue = split.residue;
        const std::size_t payload_base = tcp_base + data_offset;
        for (const auto& frame : layers.iec104)
            if (const auto* err = frame.error())
                layers.diagnostics.push_back({err->layer, payload_base + err->offset, err->reason});
        if (split.desync)
            layers.diagnostics.push_back({"IEC104", payload_base + split.desync->offset, split.desync->reason});
    }
    return layers;
}

std::string layer_chain(const PacketLayers& layers) {
    std::string chain;
    if (!layers.eth) return chain;
    chain = "ETH";
    if (!layers.ip) return chain;
    chain += " / IP";
    if (!layers.tcp) return chain;
    chain += " / TCP";
    for (const auto& frame : layers.iec104) {
        if (const auto* apdu = frame.apdu()) {
            chain += " / IEC104-";
            chain += iec104::format_letter(apdu->apci.format);
            break;
        }
    }
    return chain;
}

Bytes build_tcp_frame(const TcpFrameSpec& s, ByteView payload) {
    Bytes out;
    const std::size_t tcp_len = 20 + payload.size();
    const std::size_t ip_len = 20 + tcp_len;
    out.reserve(kEthHeader + ip_len);
    out.insert(out.end(), s.dst_mac.octets.begin(), s.dst_mac.octets.end());
    out.insert(out.end(), s.src_mac.octets.begin(), s.src_mac.octets.end());
    store_be16(out, kEtherTypeIpv4);

    const std::size_t ip_start = out.size();
    out.push_back(0x45);
    out.push_back(0x00);
    store_be16(out, static_cast<std::uint16_t>(ip_len));
    store_be16(out, s.ip_id);
    store_be16(out, 0x4000);  // DF
    out.push_back(s.ttl);
    out.push_back(kProtoTcp);
    store_be16(out, 0);
    store_be32(out, s.src_ip.value);
    store_be32(out, s.dst_ip.value);
    const std::uint16_t ip_sum = internet_checksum(ByteView(out).subspan(ip_start, 20));
    out[ip_start + 10] = static_cast<std::uint8_t>(ip_sum >> 8);
    out[ip_start + 11] = static_cast<std::uint8_t>(ip_sum);

    const std::size_t tcp_start = out.size();
    store_be16(out, s.src_port);
    store_be16(out, s.dst_port);
    store_be32(out, s.seq);
    store_be32(out, s.ack);
    out.push_back(0x50);
    out.push_back(s.flags);
    store_be16(out, s.window);
    store_be16(out, 0);
    store_be16(out, 0);
    out.insert(out.end(), payload.begin(), payload.end());
    const std::uint16_t tcp_sum =
        internet_checksum(ByteView(out).subspan(tcp_start), pseudo_header_sum(s.src_ip, s.dst_ip, tcp_len));
    out[tcp_start + 16] = static_cast<std::uint8_t>(tcp_sum >> 8);
    out[tcp_start + 17] = static_cast<std::uint8_t>(tcp_sum);
    return out;
}

} // namespace gridwatch
