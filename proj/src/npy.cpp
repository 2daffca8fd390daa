#include "symmflow/io/npy.hpp"

#include <cstring>

#include "symmflow/core/errors.hpp"

namespace symmflow {

namespace {

const char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

std::string::size_type find_key(const std::string& header, const std::string& key,
                                const std::string& entry) {
    auto pos = header.find("'" + key + "'");
    if (pos == std::string::npos)
        throw FormatError(entry + ": npy header missing key " + key);
    pos = header.find(':', pos);
    if (pos == std::string::npos) throw FormatError(entry + ": malformed npy header");
    return pos + 1;
}

}  // namespace

int NpyArray::element_size() const {
    if (dtype.size() < 3) throw FormatError("npy: bad dtype " + dtype);
    return std::stoi(dtype.substr(2));
}

NpyArray parse_npy(const std::vector<std::uint8_t>& bytes, const std::string& entry_name) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 6) != 0)
        throw FormatError(entry_name + ": not an npy payload");
    const int major = bytes[6];
    std::size_t header_len, header_off;
    if (major == 1) {
        header_len = bytes[8] | (bytes[9] << 8);
        header_off = 10;
    } else if (major == 2) {
        if (bytes.size() < 12) throw FormatError(entry_name + ": truncated npy header");
        header_len = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16)
                     | (static_cast<std::size_t>(bytes[11]) << 24);
        header_off = 12;
    } else {
        throw FormatError(entry_name + ": unsupported npy version");
    }
    if (bytes.size() < header_off + header_len)
        throw FormatError(entry_name + ": truncated npy header");

    const std::string header(reinterpret_cast<const char*>(bytes.data()) + header_off, header_len);
    NpyArray arr;

    auto dpos = find_key(header, "descr", entry_name);
    auto q1 = header.find('\'', dpos);
    auto q2 = header.find('\'', q1 + 1);
    if (q1 == std::string::npos || q2 == std::string::npos)
        throw FormatError(entry_name + ": malformed descr");
    arr.dtype = header.substr(q1 + 1, q2 - q1 - 1);
    if (arr.dtype.size() >= 1 && arr.dtype[0] == '>')
        throw FormatError(entry_name + ": big-endian npy payloads are not supported");

    auto fpos = find_key(header, "fortran_order", entry_name);
    if (header.find("True", fpos) != std::string::npos &&
        header.find("True", fpos) < header.find(',', fpos))
        throw FormatError(entry_name + ": fortran-order npy payloads are not supported");

    auto spos = find_key(header, "shape", entry_name);
    auto p1 = header.find('(', spos);
    auto p2 = header.find(')', p1);
    if (p1 == std::string::npos || p2 == std::string::npos)
        throw FormatError(entry_name + ": malformed shape");
    std::string dims = header.substr(p1 + 1, p2 - p1 - 1);
    std::size_t at = 0;
    while (at < dims.size()) {
        while (at < dims.size() && (dims[at] == ' ' || dims[at] == ',')) ++at;
        if (at >= dims.size()) break;
        std::size_t end = at;
        while (end < dims.size() && dims[end] >= '0' && dims[end] <= '9') ++end;
        if (end == at) throw FormatError(entry_name + ": malformed shape");
        arr.shape.push_back(std::stol(dims.substr(at, end - at)));
        at = end;
    }

    const std::size_t payload = header_off + header_len;
    const std::size_t expected =
        static_cast<std::size_t>(arr.element_count()) * static_cast<std::size_t>(arr.element_size());
    if (bytes.size() < payload + expected)
        throw FormatError(entry_name + ": npy payload truncated");
    arr.data.assign(bytes.begin() + static_cast<long>(payload),
                    bytes.begin() + static_cast<long>(payload + expected));
    return arr;
}

std::vector<std::uint8_t> write_npy(const std::string& dtype, const std::vector<long>& shape,
                                    const void* payload, std::size_t payload_bytes) {
    std::string dims;
    for (std::size_t i = 0; i < shape.size(); ++i) dims += std::to_string(shape[i]) + ", ";
    if (shape.size() > 1) dims = dims.substr(0, dims.size() - 2);
    std::string header = "{'descr': '" + dtype + "', 'fortran_order': False, 'shape': (" + dims +
                         "), }";
    // pad with spaces so that data starts 64-byte aligned, newline terminated
    const std::size_t unpadded = 10 + header.size() + 1;
    const std::size_t pad = (64 - unpadded % 64) % 64;
    header += std::string(pad, ' ');
    header += '\n';

    std::vector<std::uint8_t> out;
    out.reserve(10 + header.size() + payload_bytes);
    out.insert(out.end(), kMagic, kMagic + 6);
    out.push_back(1);
    out.push_back(0);
    out.push_back(static_cast<std::uint8_t>(header.size() & 0xff));
    out.push_back(static_cast<std::uint8_t>((header.size() >> 8) & 0xff));
    out.insert(out.end(), header.begin(), header.end());
    const auto* p = static_cast<const std::uint8_t*>(payload);
    out.insert(out.end(), p, p + payload_bytes);
    return out;
}

}  // namespace symmflow
