#pragma once

#include <stdexcept>
#include <string>

namespace stepguard {

// Error taxonomy shared by the whole toolkit. The C API maps these
// one-to-one onto sg_status codes.
enum class ErrorCode {
  invalid_argument,
  parse,
  validation,
  io,
  format,
  bounds,
  missing_evidence,
  missing_score,
  range,
  undefined_metric,
  parse_missing,
  divergence,
  judge_unavailable,
  judge_unparseable,
  label_unparseable,
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

const char* error_code_name(ErrorCode code);

}  // namespace stepguard
