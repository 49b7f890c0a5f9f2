#include "celltrail/zip.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstring>

#include "celltrail/errors.hpp"

namespace celltrail {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
// Fixed DOS timestamp (2004-01-01 00:00) keeps archives deterministic.
constexpr std::uint16_t kDosTime = 0;
constexpr std::uint16_t kDosDate = ((2004 - 1980) << 9) | (1 << 5) | 1;

void put16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put32(std::string& out, std::uint32_t v) {
    put16(out, static_cast<std::uint16_t>(v & 0xFFFF));
    put16(out, static_cast<std::uint16_t>(v >> 16));
}

std::uint16_t get16(std::string_view b, std::size_t at) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                      (static_cast<unsigned char>(b[at + 1]) << 8));
}

std::uint32_t get32(std::string_view b, std::size_t at) {
    return static_cast<std::uint32_t>(get16(b, at)) |
           (static_cast<std::uint32_t>(get16(b, at + 2)) << 16);
}

std::string deflate_raw(std::string_view data) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw ContainerError(ContainerErrc::CorruptEntry, "deflate initialization failed");
    std::string out;
    out.resize(deflateBound(&zs, static_cast<uLong>(data.size())));
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END)
        throw ContainerError(ContainerErrc::CorruptEntry, "deflate failed");
    out.resize(zs.total_out);
    return out;
}

std::string inflate_raw(std::string_view data, std::size_t expected_size,
                        const std::string& name) {
    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK)
        throw ContainerError(ContainerErrc::CorruptEntry, "inflate initialization failed", name);
    std::string out;
    out.resize(expected_size);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    const auto produced = zs.total_out;
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || produced != expected_size)
        throw ContainerError(ContainerErrc::CorruptEntry,
                             "corrupt deflate stream in entry " + name, name);
    return out;
}

std::uint32_t crc_of(std::string_view data) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

}  // namespace

std::string zip_pack(const std::vector<ZipEntry>& entries) {
    std::string out;
    struct CentralInfo {
        std::string name;
        std::uint32_t crc, csize, usize, offset;
        std::uint16_t method;
    };
    std::vector<CentralInfo> central;

    for (const auto& e : entries) {
        std::string compressed = deflate_raw(e.data);
        std::uint16_t method = 8;
        if (compressed.size() >= e.data.size()) {
            compressed = e.data;
            method = 0;
        }
        CentralInfo info{e.name,
                         crc_of(e.data),
                         static_cast<std::uint32_t>(compressed.size()),
                         static_cast<std::uint32_t>(e.data.size()),
                         static_cast<std::uint32_t>(out.size()),
                         method};
        put32(out, kLocalSig);
        put16(out, 20);      // version needed
        put16(out, 0);       // flags
        put16(out, method);
        put16(out, kDosTime);
        put16(out, kDosDate);
        put32(out, info.crc);
        put32(out, info.csize);
        put32(out, info.usize);
        put16(out, static_cast<std::uint16_t>(e.name.size()));
        put16(out, 0);  // extra length
        out += e.name;
        out += compressed;
        central.push_back(std::move(info));
    }

    const std::uint32_t central_start = static_cast<std::uint32_t>(out.size());
    for (const auto& c : central) {
        put32(out, kCentralSig);
        put16(out, 20);  // made by
        put16(out, 20);  // version needed
        put16(out, 0);
        put16(out, c.method);
        put16(out, kDosTime);
        put16(out, kDosDate);
        put32(out, c.crc);
        put32(out, c.csize);
        put32(out, c.usize);
        put16(out, static_cast<std::uint16_t>(c.name.size()));
        put16(out, 0);  // extra
        put16(out, 0);  // comment
        put16(out, 0);  // disk
        put16(out, 0);  // internal attrs
        put32(out, 0);  // external attrs
        put32(out, c.offset);
        out += c.name;
    }
    const std::uint32_t central_size = static_cast<std::uint32_t>(out.size()) - central_start;

    put32(out, kEndSig);
    put16(out, 0);
    put16(out, 0);
    put16(out, static_cast<std::uint16_t>(central.size()));
    put16(out, static_cast<std::uint16_t>(central.size()));
    put32(out, central_size);
    put32(out, central_start);
    put16(out, 0);  // comment length
    return out;
}

std::vector<ZipEntry> zip_unpack(std::string_view bytes) {
    if (bytes.size() < 22) throw ContainerError(ContainerErrc::NotZip, "too small to be a zip");
    // End-of-central-directory: scan backwards (a trailing comment may follow).
    std::size_t eocd = std::string_view::npos;
    const std::size_t scan_limit = bytes.size() >= 22 + 65536 ? bytes.size() - 22 - 65536 : 0;
    for (std::size_t i = bytes.size() - 22 + 1; i-- > scan_limit;) {
        if (get32(bytes, i) == kEndSig) {
            eocd = i;
            break;
        }
    }
    if (eocd == std::string_view::npos)
        throw ContainerError(ContainerErrc::NotZip, "no end-of-central-directory record");

    const std::uint16_t count = get16(bytes, eocd + 10);
    std::size_t at = get32(bytes, eocd + 16);
    std::vector<ZipEntry> out;
    for (std::uint16_t i = 0; i < count; ++i) {
        if (at + 46 > bytes.size() || get32(bytes, at) != kCentralSig)
            throw ContainerError(ContainerErrc::NotZip, "bad central directory record");
        const std::uint16_t method = get16(bytes, at + 10);
        const std::uint32_t crc = get32(bytes, at + 16);
        const std::uint32_t csize = get32(bytes, at + 20);
        const std::uint32_t usize = get32(bytes, at + 24);
        const std::uint16_t name_len = get16(bytes, at + 28);
        const std::uint16_t extra_len = get16(bytes, at + 30);
        const std::uint16_t comment_len = get16(bytes, at + 32);
        const std::uint32_t local_off = get32(bytes, at + 42);
        if (at + 46 + name_len > bytes.size())
            throw ContainerError(ContainerErrc::NotZip, "truncated central directory");
        std::string name(bytes.substr(at + 46, name_len));
        at += 46 + name_len + extra_len + comment_len;

        if (local_off + 30 > bytes.size() || get32(bytes, local_off) != kLocalSig)
            throw ContainerError(ContainerErrc::NotZip, "bad local header for " + name);
        const std::uint16_t lname = get16(bytes, local_off + 26);
        const std::uint16_t lextra = get16(bytes, local_off + 28);
        const std::size_t data_off = local_off + 30 + lname + lextra;
        if (data_off + csize > bytes.size())
            throw ContainerError(ContainerErrc::NotZip, "truncated entry data for " + name);
        const std::string_view raw = bytes.substr(data_off, csize);

        std::string data;
        if (method == 0) {
            if (csize != usize)
                throw ContainerError(ContainerErrc::CorruptEntry,
                                     "stored entry with size mismatch: " + name, name);
            data.assign(raw);
        } else if (method == 8) {
            data = inflate_raw(raw, usize, name);
        } else {
            throw ContainerError(ContainerErrc::CorruptEntry,
                                 "unsupported compression method in " + name, name);
        }
        if (crc_of(data) != crc)
            throw ContainerError(ContainerErrc::CorruptEntry, "CRC mismatch in " + name, name);
        out.push_back(ZipEntry{std::move(name), std::move(data)});
    }
    return out;
}

}  // namespace celltrail
