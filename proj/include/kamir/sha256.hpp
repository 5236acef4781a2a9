#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace kamir {

// Incremental SHA-256 (FIPS 180-4). Used for corpus/classifier digests so
// manifests can detect stale references.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, std::size_t len);
  void update(std::span<const std::uint8_t> data) { update(data.data(), data.size()); }
  // Finalizes and returns the lowercase hex digest; the object must not be
  // reused afterwards.
  std::string hex_digest();

 private:
  void process_block(const std::uint8_t* block);

  std::uint32_t h_[8];
  std::uint8_t buf_[64];
  std::size_t buf_len_ = 0;
  std::uint64_t total_len_ = 0;
};

std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(const std::string& data);
// Throws DataError if the file cannot be read.
std::string sha256_file_hex(const std::string& path);

}  // namespace kamir
