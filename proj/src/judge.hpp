#pragma once

#include <cstdlib>
#include <memory>
#include <optional>
#include <string>

#include "scorers.hpp"
#include "templates.hpp"
#include "trace.hpp"

namespace stepguard::judge {

// Name of the environment variable holding the bearer token.
inline constexpr const char* kTokenEnvVar = "STEPGUARD_JUDGE_TOKEN";

struct JudgeConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8080 or http://host/v1
  std::string model;
  std::string auth_token;  // filled from STEPGUARD_JUDGE_TOKEN by default
  int max_concurrency = 4;
  int retry_limit = 2;
  double timeout_s = 30.0;
  std::string template_id = "v1";
  std::optional<std::filesystem::path> template_dir;
  scorers::Scale scale = scorers::Scale::unit;
  int initial_backoff_ms = 250;

  void validate() const;
  TemplateSet templates() const;
  static JudgeConfig from_json(const nlohmann::json& j);
};

struct JudgeTranscript {
  std::string prompt;
  std::string raw_reply;  // last reply received
  std::optional<double> parsed_failure;
  std::string parse_error;  // empty when parsed
  int attempts = 0;
  double latency_ms = 0.0;  // summed over attempts
};

// Judge failures carry the transcript so callers can log what was asked.
class JudgeError : public Error {
 public:
  JudgeError(ErrorCode code, std::string message, JudgeTranscript transcript)
      : Error(code, std::move(message)), transcript_(std::move(transcript)) {}
  const JudgeTranscript& transcript() const { return transcript_; }

 private:
  JudgeTranscript transcript_;
};

// History section for step i (1-based): query/response blocks for steps
// 1..i-1 followed by query i. Block order makes the section for step i a
// string prefix-extension of the section for step i-1, and nothing from
// steps > i ever appears.
std::string render_history(const InteractionTrace& trace, size_t step_index);

// Deterministic prompt text. step_index is required iff granularity is
// step, 1-based, and must be within range. The prompt instructs the judge to
// end with "Confidence: <number in [0,1]>".
std::string render_judge_prompt(const InteractionTrace& trace, scorers::Granularity granularity,
                                std::optional<size_t> step_index,
                                const TemplateSet& templates = builtin_templates());

struct JudgeResult {
  double failure = 0.0;
  JudgeTranscript transcript;
};

// One chat-completion call at temperature 0, with exponential backoff on
// transport errors and HTTP 429/5xx, and a single stricter re-ask when the
// reply carries no parseable confidence. Total attempts never exceed
// retry_limit + 1.
JudgeResult judge_score(const JudgeConfig& config, const InteractionTrace& trace,
                        scorers::Granularity granularity, std::optional<size_t> step_index);

// Grades response vs gold; the judge must answer CORRECT (0) or INCORRECT
// (1). Same retry budget; unusable final reply raises label_unparseable.
int judge_label(const JudgeConfig& config, const std::string& response, const std::string& gold,
                const std::string& context);

// Scorer issuing one call per step (step granularity) or one per trace
// (response), with at most max_concurrency requests in flight.
std::unique_ptr<scorers::Scorer> make_judge_scorer(JudgeConfig config);

}  // namespace stepguard::judge
