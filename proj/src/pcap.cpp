#include "gridwatch/pcap.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

namespace gridwatch::pcap {

namespace {

constexpr std::size_t kGlobalHeader = 24;
constexpr std::size_t kRecordHeader = 16;
constexpr std::uint32_t kMaxSnap = 262144;

std::uint32_t load32(ByteView b, std::size_t off, bool swapped) {
    std::uint32_t le = std::uint32_t{b[off]} | (std::uint32_t{b[off + 1]} << 8) |
                       (std::uint32_t{b[off + 2]} << 16) | (std::uint32_t{b[off + 3]} << 24);
    return swapped ? load_be32(b, off) : le;
}

void put32(Bytes& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

} // namespace

std::vector<RawPacket> read_bytes(ByteView b) {
    if (b.size() < kGlobalHeader) throw CaptureError("pcap: file shorter than global header");
    const std::uint32_t magic_le = load32(b, 0, false);
    bool swapped = false;
    bool nano = false;
    if (magic_le == kMagicMicro || magic_le == kMagicNano) {
        nano = magic_le == kMagicNano;
    } else {
        const std::uint32_t magic_be = load32(b, 0, true);
        if (magic_be != kMagicMicro && magic_be != kMagicNano)
            throw CaptureError("pcap: unrecognised magic number");
        swapped = true;
        nano = magic_be == kMagicNano;
    }
    const std::uint32_t link = load32(b, 20, swapped);
    if (link != kLinkTypeEthernet) throw CaptureError("pcap: link type " + std::to_string(link) + " is not Ethernet");

    std::vector<RawPacket> packets;
    std::size_t off = kGlobalHeader;
    while (off < b.size()) {
        if (b.size() - off < kRecordHeader) throw CaptureError("pcap: truncated record header");
        const std::uint32_t sec = load32(b, off, swapped);
        const std::uint32_t frac = load32(b, off + 4, swapped);
        const std::uint32_t incl = load32(b, off + 8, swapped);
        off += kRecordHeader;
        if (incl > kMaxSnap) throw CaptureError("pcap: record length exceeds snap limit");
        if (b.size() - off < incl) throw CaptureError("pcap: truncated record data");
        if (frac >= (nano ? 1'000'000'000u : 1'000'000u)) throw CaptureError("pcap: fractional seconds out of range");
        RawPacket p;
        p.ts.sec = sec;
        p.ts.nsec = nano ? frac : frac * 1000;
        p.link_bytes.assign(b.begin() + static_cast<std::ptrdiff_t>(off),
                            b.begin() + static_cast<std::ptrdiff_t>(off + incl));
        packets.push_back(std::move(p));
        off += incl;
    }
    return packets;
}

std::vector<RawPacket> read(std::istream& in) {
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return read_bytes(bytes);
}

std::vector<RawPacket> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CaptureError("pcap: cannot open " + path);
    return read(in);
}

Bytes write_bytes(const std::vector<RawPacket>& packets) {
    Bytes out;
    put32(out, kMagicNano);
    put16(out, 2);
    put16(out, 4);
    put32(out, 0);
    put32(out, 0);
    put32(out, kMaxSnap);
    put32(out, kLinkTypeEthernet);
    for (const auto& p : packets) {
        put32(out, static_cast<std::uint32_t>(p.ts.sec));
        put32(out, p.ts.nsec);
        put32(out, static_cast<std::uint32_t>(p.link_bytes.size()));
        put32(out, static_cast<std::uint32_t>(p.link_bytes.size()));
        out.insert(out.end(), p.link_bytes.begin(), p.link_bytes.end());
    }
    return out;
}

void write(std::ostream& out, const std::vector<RawPacket>& packets) {
    const Bytes bytes = write_bytes(packets);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_file(const std::string& path, const std::vector<RawPacket>& packets) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CaptureError("pcap: cannot create " + path);
    write(out, packets);
    if (!out) throw CaptureError("pcap: write failed for " + path);
}

} // namespace gridwatch::pcap
