#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace symmflow {

// Minimal NPY v1.0 support, little-endian payloads only.
struct NpyArray {
    std::string dtype;  // e.g. "|u1", "<i8", "<f4"
    std::vector<long> shape;
    std::vector<std::uint8_t> data;

    long element_count() const {
        long n = 1;
        for (long d : shape) n *= d;
        return n;
    }
    int element_size() const;
};

NpyArray parse_npy(const std::vector<std::uint8_t>& bytes, const std::string& entry_name);

std::vector<std::uint8_t> write_npy(const std::string& dtype, const std::vector<long>& shape,
                                    const void* payload, std::size_t payload_bytes);

}  // namespace symmflow
