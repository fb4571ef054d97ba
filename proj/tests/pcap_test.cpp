#include <doctest.h>

#include "gridwatch/pcap.hpp"
#include "support.hpp"

using namespace gridwatch;

namespace {

Bytes syn_frame() {
    TcpFrameSpec s;
    s.src_mac = *MacAddress::parse("00:1b:21:3a:4f:01");
    s.dst_mac = *MacAddress::parse("00:1b:21:3a:4f:12");
    s.src_ip = *Ipv4Address::parse("172.24.0.2");
    s.dst_ip = *Ipv4Address::parse("172.24.0.12");
    s.src_port = 50000;
    s.dst_port = 2404;
    s.seq = 7;
    s.flags = tcp_flag::SYN;
    return build_tcp_frame(s, {});
}

void put32(Bytes& out, std::uint32_t v, bool big) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (big ? 24 - 8 * i : 8 * i)));
}
void put16(Bytes& out, std::uint16_t v, bool big) {
    out.push_back(static_cast<std::uint8_t>(big ? v >> 8 : v));
    out.push_back(static_cast<std::uint8_t>(big ? v : v >> 8));
}

Bytes capture(std::uint32_t magic, bool big, std::uint32_t sub, const Bytes& frame, std::uint32_t link = 1) {
    Bytes out;
    put32(out, magic, big);
    put16(out, 2, big);
    put16(out, 4, big);
    put32(out, 0, big);
    put32(out, 0, big);
    put32(out, 65535, big);
    put32(out, link, big);
    put32(out, 1649933229, big);
    put32(out, sub, big);
    put32(out, static_cast<std::uint32_t>(frame.size()), big);
    put32(out, static_cast<std::uint32_t>(frame.size()), big);
    out.insert(out.end(), frame.begin(), frame.end());
    return out;
}

} // namespace

TEST_CASE("hand-built SYN frame has the expected header fields") {
    const auto f = syn_frame();
    REQUIRE(f.size() == 54);
    CHECK(f[12] == 0x08);
    CHECK(f[13] == 0x00);
    CHECK(f[14] == 0x45);
    CHECK(f[23] == 6);
    CHECK(internet_checksum(ByteView(f).subspan(14, 20)) == 0);
    CHECK(load_be16(f, 34) == 50000);
    CHECK(load_be16(f, 36) == 2404);
    CHECK(f[47] == tcp_flag::SYN);
}

TEST_CASE("internet checksum of the RFC 1071 example") {
    const Bytes b{0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7};
    CHECK(internet_checksum(b) == static_cast<std::uint16_t>(~0xddf2 & 0xffff));
}

TEST_CASE("decoding recovers every layer") {
    const auto l = decode_packet(RawPacket{Timestamp{1, 0}, syn_frame()});
    REQUIRE(l.eth);
    REQUIRE(l.ip);
    REQUIRE(l.tcp);
    CHECK(l.ip->checksum_ok);
    CHECK(l.tcp->checksum_ok);
    CHECK(l.tcp->seq == 7);
    CHECK(l.tcp->seq_length() == 1);
    CHECK(layer_chain(l) == "ETH / IP / TCP");
}

TEST_CASE("layer chain names the first IEC 104 frame") {
    TcpFrameSpec s;
    s.src_ip = *Ipv4Address::parse("10.0.0.1");
    s.dst_ip = *Ipv4Address::parse("10.0.0.2");
    const auto l = decode_packet(RawPacket{
        Timestamp{}, build_tcp_frame(s, iec104::encode_apdu(iec104::make_u_frame(iec104::UFunction::TestFrAct)))});
    CHECK(l.looks_like_iec104());
    CHECK(layer_chain(l) == "ETH / IP / TCP / IEC104-U");
}

TEST_CASE("truncated frames lose their upper layers") {
    auto f = syn_frame();
    f.resize(30);
    const auto l = decode_packet(RawPacket{Timestamp{}, f});
    CHECK(l.eth);
    CHECK_FALSE(l.tcp);
}

TEST_CASE("all four pcap header variants are read") {
    const auto f = syn_frame();
    struct Case {
        std::uint32_t magic;
        bool big;
        std::uint32_t sub;
        std::uint32_t nsec;
    };
    for (const auto& c : {Case{pcap::kMagicMicro, false, 250000, 250000000}, Case{pcap::kMagicMicro, true, 250000, 250000000},
                          Case{pcap::kMagicNano, false, 123, 123}, Case{pcap::kMagicNano, true, 123, 123}}) {
        const auto pkts = pcap::read_bytes(capture(c.magic, c.big, c.sub, f));
        REQUIRE(pkts.size() == 1);
        CHECK(pkts[0].ts == Timestamp{1649933229, c.nsec});
        CHECK(pkts[0].link_bytes == f);
    }
}

TEST_CASE("pcap write and read round trip") {
    std::vector<RawPacket> pkts{{Timestamp{10, 5}, syn_frame()}, {Timestamp{11, 999999999}, syn_frame()}};
    const auto back = pcap::read_bytes(pcap::write_bytes(pkts));
    REQUIRE(back.size() == 2);
    CHECK(back[1].ts == pkts[1].ts);
    CHECK(back[0].link_bytes == pkts[0].link_bytes);
}

TEST_CASE("corrupt captures are rejected") {
    const auto f = syn_frame();
    CHECK_THROWS_AS(pcap::read_bytes(Bytes{1, 2, 3}), pcap::CaptureError);
    CHECK_THROWS_AS(pcap::read_bytes(capture(0xDEADBEEF, false, 0, f)), pcap::CaptureError);
    CHECK_THROWS_AS(pcap::read_bytes(capture(pcap::kMagicMicro, false, 0, f, 101)), pcap::CaptureError);
    auto cut = capture(pcap::kMagicMicro, false, 0, f);
    cut.resize(cut.size() - 5);
    CHECK_THROWS_AS(pcap::read_bytes(cut), pcap::CaptureError);
    CHECK_THROWS_AS(pcap::read_file("/nonexistent/capture.pcap"), pcap::CaptureError);
}

TEST_CASE("bundled rogue endpoint capture is readable") {
    const auto pkts = pcap::read_file(testing::data_file("rogue_endpoint.pcap"));
    CHECK(pkts.size() == 9);
}
