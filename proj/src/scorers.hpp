#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "trace.hpp"

namespace stepguard::scorers {

enum class Granularity { step, response };

const char* granularity_name(Granularity g);
Granularity granularity_from(std::string_view name);

enum class Scale { unit, percent };

// Scores are failure scores: value in [0,1], higher = more likely incorrect.
// Confidence-oriented evidence is flipped at the scorer boundary so nothing
// downstream branches on orientation.
struct ScorerOutput {
  std::string scorer_name;
  Granularity granularity = Granularity::step;
  std::vector<double> per_step;          // populated iff granularity == step
  std::optional<double> whole;           // populated iff granularity == response
  std::map<std::string, double> diagnostics;
};

// Mean per-token KL divergence of softmax(logits) from Uniform(V):
// (1/T) * sum_t [ln V - H(softmax(row_t))], in [0, ln V]. Higher = more
// certain. Softmax subtracts the row max, so logits up to |1e4| are safe.
double self_certainty_raw(std::span<const float> logits, size_t rows, size_t vocab);
double self_certainty_raw(std::span<const double> logits, size_t rows, size_t vocab);

struct ParsedConfidence {
  double failure = 0.0;  // 1 - confidence after scale conversion and clamping
  bool clamped = false;
};

// Extracts a confidence from free text: last "confidence[:=]? <number>"
// match (case-insensitive), else the last standalone number. percent scale
// divides by 100. Values outside [0,1] clamp with the flag set.
// Throws Error(parse_missing) when no number is found.
ParsedConfidence parse_verbalized(const std::string& text, Scale scale);

// Reads precomputed scores named `scorer_name` from the trace. Step
// granularity requires the entry on every step; response granularity reads
// the final step's entry. Values must lie in [0,1].
ScorerOutput precomputed_score(const InteractionTrace& trace, const std::string& scorer_name,
                               Granularity granularity);

struct TraceError {
  std::string trace_id;
  ErrorCode code = ErrorCode::internal;
  std::string message;
};

struct TraceResult {
  std::optional<ScorerOutput> output;
  std::optional<TraceError> error;
};

// A confidence scorer applied to a whole dataset. Scoring is dataset-level
// because some scorers (self-certainty) normalize across the dataset.
// Results are positionally aligned with dataset.traces.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  virtual std::vector<TraceResult> score(const Dataset& dataset, Granularity granularity,
                                         size_t workers) const = 0;
};

std::unique_ptr<Scorer> make_self_certainty();
std::unique_ptr<Scorer> make_verbalized(Scale scale);
// `name` is the bare key inside precomputed_scores; the scorer reports
// itself as "precomputed:<name>".
std::unique_ptr<Scorer> make_precomputed(std::string name);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions
// propagate from the first failing index. Used by scorers whose per-trace
// work is independent.
void parallel_for(size_t n, size_t workers, const std::function<void(size_t)>& fn);

}  // namespace stepguard::scorers
