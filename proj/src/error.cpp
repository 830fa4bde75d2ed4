#include "error.hpp"

namespace stepguard {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::parse: return "parse";
    case ErrorCode::validation: return "validation";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::bounds: return "bounds";
    case ErrorCode::missing_evidence: return "missing_evidence";
    case ErrorCode::missing_score: return "missing_score";
    case ErrorCode::range: return "range";
    case ErrorCode::undefined_metric: return "undefined_metric";
    case ErrorCode::parse_missing: return "parse_missing";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::judge_unavailable: return "judge_unavailable";
    case ErrorCode::judge_unparseable: return "judge_unparseable";
    case ErrorCode::label_unparseable: return "label_unparseable";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace stepguard
