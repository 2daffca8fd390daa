#include "symmflow/io/zip.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "symmflow/core/errors.hpp"

namespace symmflow {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open archive: " + path);
    f.seekg(0, std::ios::end);
    const auto len = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(len));
    f.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!f) throw FormatError("cannot read archive: " + path);
    return bytes;
}

std::uint16_t rd16(const std::uint8_t* p) { return p[0] | (p[1] << 8); }
std::uint32_t rd32(const std::uint8_t* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void wr16(std::vector<std::uint8_t>& v, std::uint16_t x) {
    v.push_back(x & 0xff);
    v.push_back((x >> 8) & 0xff);
}
void wr32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(x & 0xff);
    v.push_back((x >> 8) & 0xff);
    v.push_back((x >> 16) & 0xff);
    v.push_back((x >> 24) & 0xff);
}

struct CentralEntry {
    std::string name;
    std::uint16_t method;
    std::uint32_t comp_size;
    std::uint32_t uncomp_size;
    std::uint32_t local_offset;
};

std::vector<CentralEntry> read_central_directory(const std::vector<std::uint8_t>& bytes,
                                                 const std::string& path) {
    // locate end-of-central-directory by scanning backwards for its signature
    if (bytes.size() < 22) throw FormatError(path + ": not a zip archive");
    std::size_t eocd = std::string::npos;
    const std::size_t scan_limit = bytes.size() >= 22 + 65535 ? bytes.size() - 22 - 65535 : 0;
    for (std::size_t i = bytes.size() - 22 + 1; i-- > scan_limit;) {
        if (bytes[i] == 0x50 && bytes[i + 1] == 0x4b && bytes[i + 2] == 0x05 && bytes[i + 3] == 0x06) {
            eocd = i;
            break;
        }
    }
    if (eocd == std::string::npos) throw FormatError(path + ": zip central directory not found");

    const std::uint16_t count = rd16(&bytes[eocd + 10]);
    std::uint32_t cd_offset = rd32(&bytes[eocd + 16]);

    std::vector<CentralEntry> entries;
    std::size_t at = cd_offset;
    for (std::uint16_t i = 0; i < count; ++i) {
        if (at + 46 > bytes.size() || rd32(&bytes[at]) != 0x02014b50)
            throw FormatError(path + ": corrupt zip central directory");
        CentralEntry e;
        e.method = rd16(&bytes[at + 10]);
        e.comp_size = rd32(&bytes[at + 20]);
        e.uncomp_size = rd32(&bytes[at + 24]);
        const std::uint16_t name_len = rd16(&bytes[at + 28]);
        const std::uint16_t extra_len = rd16(&bytes[at + 30]);
        const std::uint16_t comment_len = rd16(&bytes[at + 32]);
        e.local_offset = rd32(&bytes[at + 42]);
        e.name.assign(reinterpret_cast<const char*>(&bytes[at + 46]), name_len);
        entries.push_back(std::move(e));
        at += 46u + name_len + extra_len + comment_len;
    }
    return entries;
}

std::vector<std::uint8_t> inflate_raw(const std::uint8_t* src, std::size_t src_len,
                                      std::size_t dst_len, const std::string& what) {
    std::vector<std::uint8_t> out(dst_len);
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw FormatError(what + ": inflate init failed");
    zs.next_in = const_cast<Bytef*>(src);
    zs.avail_in = static_cast<uInt>(src_len);
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(dst_len);
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw FormatError(what + ": inflate failed");
    return out;
}

}  // namespace

std::vector<std::string> zip_list_entries(const std::string& path) {
    const auto bytes = read_file(path);
    std::vector<std::string> names;
    for (const auto& e : read_central_directory(bytes, path)) names.push_back(e.name);
    return names;
}

bool zip_has_entry(const std::string& path, const std::string& name) {
    const auto bytes = read_file(path);
    for (const auto& e : read_central_directory(bytes, path))
        if (e.name == name) return true;
    return false;
}

std::vector<std::uint8_t> zip_read_entry(const std::string& path, const std::string& name) {
    const auto bytes = read_file(path);
    for (const auto& e : read_central_directory(bytes, path)) {
        if (e.name != name) continue;
        const std::size_t at = e.local_offset;
        if (at + 30 > bytes.size() || rd32(&bytes[at]) != 0x04034b50)
            throw FormatError(path + ": corrupt local header for " + name);
        const std::uint16_t name_len = rd16(&bytes[at + 26]);
        const std::uint16_t extra_len = rd16(&bytes[at + 28]);
        const std::size_t data_at = at + 30 + name_len + extra_len;
        if (data_at + e.comp_size > bytes.size())
            throw FormatError(path + ": truncated entry " + name);
        if (e.method == 0) {
            return {bytes.begin() + static_cast<long>(data_at),
                    bytes.begin() + static_cast<long>(data_at + e.comp_size)};
        }
        if (e.method == 8)
            return inflate_raw(&bytes[data_at], e.comp_size, e.uncomp_size, path + ":" + name);
        throw FormatError(path + ": unsupported compression method for " + name);
    }
    throw FormatError(path + ": missing entry " + name);
}

ZipWriter::ZipWriter(const std::string& path) : path_(path) {}

ZipWriter::~ZipWriter() {
    if (!finished_) {
        try {
            finish();
        } catch (...) {
        }
    }
}

void ZipWriter::add(const std::string& name, const std::vector<std::uint8_t>& data, bool deflate) {
    Record rec;
    rec.name = name;
    rec.uncomp_size = static_cast<std::uint32_t>(data.size());
    rec.crc = static_cast<std::uint32_t>(
        crc32(0, data.empty() ? Z_NULL : data.data(), static_cast<uInt>(data.size())));
    rec.offset = static_cast<std::uint32_t>(buffer_.size());

    std::vector<std::uint8_t> comp;
    if (deflate && !data.empty()) {
        uLongf bound = compressBound(static_cast<uLong>(data.size()));
        comp.resize(bound + 16);
        z_stream zs{};
        deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY);
        zs.next_in = const_cast<Bytef*>(data.data());
        zs.avail_in = static_cast<uInt>(data.size());
        zs.next_out = comp.data();
        zs.avail_out = static_cast<uInt>(comp.size());
        const int rc = ::deflate(&zs, Z_FINISH);
        const std::size_t written = comp.size() - zs.avail_out;
        deflateEnd(&zs);
        if (rc != Z_STREAM_END) throw FormatError("zip deflate failed for " + name);
        comp.resize(written);
        rec.method = 8;
    } else {
        comp = data;
        rec.method = 0;
    }
    rec.comp_size = static_cast<std::uint32_t>(comp.size());

    wr32(buffer_, 0x04034b50);
    wr16(buffer_, 20);        // version needed
    wr16(buffer_, 0);         // flags
    wr16(buffer_, rec.method);
    wr16(buffer_, 0);         // mod time
    wr16(buffer_, 0);         // mod date
    wr32(buffer_, rec.crc);
    wr32(buffer_, rec.comp_size);
    wr32(buffer_, rec.uncomp_size);
    wr16(buffer_, static_cast<std::uint16_t>(name.size()));
    wr16(buffer_, 0);  // extra len
    buffer_.insert(buffer_.end(), name.begin(), name.end());
    buffer_.insert(buffer_.end(), comp.begin(), comp.end());
    records_.push_back(std::move(rec));
}

void ZipWriter::finish() {
    if (finished_) return;
    finished_ = true;
    const std::uint32_t cd_offset = static_cast<std::uint32_t>(buffer_.size());
    for (const auto& rec : records_) {
        wr32(buffer_, 0x02014b50);
        wr16(buffer_, 20);  // made by
        wr16(buffer_, 20);  // needed
        wr16(buffer_, 0);
        wr16(buffer_, rec.method);
        wr16(buffer_, 0);
        wr16(buffer_, 0);
        wr32(buffer_, rec.crc);
        wr32(buffer_, rec.comp_size);
        wr32(buffer_, rec.uncomp_size);
        wr16(buffer_, static_cast<std::uint16_t>(rec.name.size()));
        wr16(buffer_, 0);
        wr16(buffer_, 0);
        wr16(buffer_, 0);
        wr16(buffer_, 0);
        wr32(buffer_, 0);
        wr32(buffer_, rec.offset);
        buffer_.insert(buffer_.end(), rec.name.begin(), rec.name.end());
    }
    const std::uint32_t cd_size = static_cast<std::uint32_t>(buffer_.size()) - cd_offset;
    wr32(buffer_, 0x06054b50);
    wr16(buffer_, 0);
    wr16(buffer_, 0);
    wr16(buffer_, static_cast<std::uint16_t>(records_.size()));
    wr16(buffer_, static_cast<std::uint16_t>(records_.size()));
    wr32(buffer_, cd_size);
    wr32(buffer_, cd_offset);
    wr16(buffer_, 0);

    std::ofstream f(path_, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write archive: " + path_);
    f.write(reinterpret_cast<const char*>(buffer_.data()), static_cast<long>(buffer_.size()));
}

}  // namespace symmflow
