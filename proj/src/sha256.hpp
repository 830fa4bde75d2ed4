#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace stepguard {

// Incremental SHA-256. Used for config hashes and input digests in run
// manifests, so no external crypto dependency is pulled in.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, size_t len);
  // Finalizes and returns the lowercase hex digest. The object must not be
  // reused afterwards.
  std::string hex_digest();

 private:
  void process_block(const uint8_t* block);

  uint32_t state_[8];
  uint64_t total_len_ = 0;
  uint8_t buffer_[64];
  size_t buffer_len_ = 0;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace stepguard
