#include "sidecar.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include "error.hpp"

namespace stepguard {

namespace {

constexpr uint64_t kHeaderSize = 4 + 4 + 8 + 8;

void read_exact(int fd, void* buf, size_t len, uint64_t offset, const std::filesystem::path& path) {
  uint8_t* p = static_cast<uint8_t*>(buf);
  while (len > 0) {
    ssize_t n = ::pread(fd, p, len, off_t(offset));
    if (n < 0) fail(ErrorCode::io, "read failed on sidecar " + path.string());
    if (n == 0) fail(ErrorCode::bounds, "unexpected end of sidecar " + path.string());
    p += n;
    offset += uint64_t(n);
    len -= size_t(n);
  }
}

}  // namespace

LogitsSidecar LogitsSidecar::open(const std::filesystem::path& path) {
  int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) fail(ErrorCode::io, "cannot open sidecar: " + path.string());

  // The view owns the descriptor from here on; its destructor closes it on
  // any validation failure below.
  LogitsSidecar view;
  view.fd_ = fd;
  view.path_ = path;

  uint8_t header[kHeaderSize];
  off_t file_size = ::lseek(fd, 0, SEEK_END);
  if (file_size < 0 || uint64_t(file_size) < kHeaderSize)
    fail(ErrorCode::format, "sidecar too small for header: " + path.string());
  read_exact(fd, header, kHeaderSize, 0, path);

  if (std::memcmp(header, kMagic, 4) != 0)
    fail(ErrorCode::format, "bad sidecar magic in " + path.string());
  uint32_t version;
  std::memcpy(&version, header + 4, 4);
  if (version != kVersion)
    fail(ErrorCode::format, "unsupported sidecar version " + std::to_string(version) + " in " +
                                path.string());
  std::memcpy(&view.vocab_, header + 8, 8);
  std::memcpy(&view.rows_, header + 16, 8);
  if (view.vocab_ < 2)
    fail(ErrorCode::format,
         "sidecar vocab size must be >= 2, got " + std::to_string(view.vocab_));

  uint64_t expected = kHeaderSize + view.rows_ * view.vocab_ * sizeof(float);
  if (uint64_t(file_size) != expected)
    fail(ErrorCode::bounds, "sidecar " + path.string() + " holds " +
                                std::to_string(uint64_t(file_size)) + " bytes, header implies " +
                                std::to_string(expected));

  return view;
}

void LogitsSidecar::write(const std::filesystem::path& path, uint64_t vocab,
                          std::span<const float> values) {
  if (vocab < 2) fail(ErrorCode::format, "sidecar vocab size must be >= 2");
  if (values.size() % vocab != 0)
    fail(ErrorCode::invalid_argument, "sidecar value count is not a multiple of vocab size");
  for (float v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::validation, "sidecar values must be finite");
  }
  uint64_t rows = values.size() / vocab;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write sidecar: " + path.string());
  out.write(kMagic, 4);
  uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&vocab), 8);
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(values.data()),
            std::streamsize(values.size() * sizeof(float)));
  if (!out) fail(ErrorCode::io, "short write on sidecar: " + path.string());
}

LogitsSidecar::LogitsSidecar(LogitsSidecar&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)),
      vocab_(other.vocab_),
      rows_(other.rows_),
      path_(std::move(other.path_)) {}

LogitsSidecar& LogitsSidecar::operator=(LogitsSidecar&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
    vocab_ = other.vocab_;
    rows_ = other.rows_;
    path_ = std::move(other.path_);
  }
  return *this;
}

LogitsSidecar::~LogitsSidecar() {
  if (fd_ >= 0) ::close(fd_);
}

std::vector<float> LogitsSidecar::read_rows(uint64_t offset, uint64_t count) const {
  if (count == 0) fail(ErrorCode::bounds, "sidecar read of zero rows");
  if (offset > rows_ || rows_ - offset < count)
    fail(ErrorCode::bounds, "sidecar rows [" + std::to_string(offset) + ", " +
                                std::to_string(offset + count) + ") out of range, T=" +
                                std::to_string(rows_));
  std::vector<float> out(size_t(count * vocab_));
  uint64_t byte_offset = kHeaderSize + offset * vocab_ * sizeof(float);
  read_exact(fd_, out.data(), out.size() * sizeof(float), byte_offset, path_);
  for (size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i]))
      fail(ErrorCode::validation, "non-finite logit at row " +
                                      std::to_string(offset + i / vocab_) + " of " +
                                      path_.string());
  }
  return out;
}

}  // namespace stepguard
