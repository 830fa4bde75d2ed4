#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace stepguard {

// Binary sidecar holding per-token logit rows referenced from traces.
// Layout (little-endian): magic "SGLW", u32 version, u64 vocab size V,
// u64 row count T, then T*V float32 values row-major.
//
// A view keeps an open file descriptor and serves positioned reads, so it is
// safe to share across threads for concurrent row access.
class LogitsSidecar {
 public:
  static constexpr char kMagic[4] = {'S', 'G', 'L', 'W'};
  static constexpr uint32_t kVersion = 1;

  static LogitsSidecar open(const std::filesystem::path& path);
  static void write(const std::filesystem::path& path, uint64_t vocab,
                    std::span<const float> values);

  LogitsSidecar(LogitsSidecar&& other) noexcept;
  LogitsSidecar& operator=(LogitsSidecar&& other) noexcept;
  LogitsSidecar(const LogitsSidecar&) = delete;
  LogitsSidecar& operator=(const LogitsSidecar&) = delete;
  ~LogitsSidecar();

  uint64_t vocab_size() const { return vocab_; }
  uint64_t row_count() const { return rows_; }
  const std::filesystem::path& path() const { return path_; }

  // Reads rows [offset, offset + count) as a count x V row-major block.
  // Throws on out-of-range access or non-finite values.
  std::vector<float> read_rows(uint64_t offset, uint64_t count) const;

 private:
  LogitsSidecar() = default;

  int fd_ = -1;
  uint64_t vocab_ = 0;
  uint64_t rows_ = 0;
  std::filesystem::path path_;
};

}  // namespace stepguard
