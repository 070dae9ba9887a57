#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace lossscope {

// FIPS 180-4 SHA-256, enough for content hashes in repro manifests.
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, std::size_t len);
    // hex digest; finalizes a copy so the object can keep accepting data
    std::string hex_digest() const;

    static std::string hash_hex(std::string_view data);

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t state_[8];
    std::uint64_t total_len_ = 0;
    std::uint8_t buffer_[64];
    std::size_t buffer_len_ = 0;
};

std::string sha256_file_hex(const std::string& path);

}  // namespace lossscope
