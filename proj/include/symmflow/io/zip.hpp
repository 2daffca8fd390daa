#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace symmflow {

// Plain-file zip access covering what numpy savez archives need: stored and
// deflated entries, no zip64, no encryption.
std::vector<std::string> zip_list_entries(const std::string& path);
std::vector<std::uint8_t> zip_read_entry(const std::string& path, const std::string& name);
bool zip_has_entry(const std::string& path, const std::string& name);

class ZipWriter {
public:
    explicit ZipWriter(const std::string& path);
    ~ZipWriter();
    void add(const std::string& name, const std::vector<std::uint8_t>& data, bool deflate = true);
    void finish();

private:
    struct Record {
        std::string name;
        std::uint32_t crc;
        std::uint32_t comp_size;
        std::uint32_t uncomp_size;
        std::uint16_t method;
        std::uint32_t offset;
    };
    std::string path_;
    std::vector<std::uint8_t> buffer_;
    std::vector<Record> records_;
    bool finished_ = false;
};

}  // namespace symmflow
