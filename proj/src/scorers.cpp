#include "scorers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <regex>
#include <thread>

namespace stepguard::scorers {

namespace {

constexpr double kDegenerateNormalizedScore = 0.5;

// Raw certainty of one logit row in double precision.
template <typename T>
double row_certainty(const T* row, size_t vocab) {
  double max_logit = double(row[0]);
  for (size_t v = 1; v < vocab; ++v) max_logit = std::max(max_logit, double(row[v]));
  double sum = 0.0;
  for (size_t v = 0; v < vocab; ++v) sum += std::exp(double(row[v]) - max_logit);
  double log_sum = std::log(sum);
  // H(p) = log_sum - (1/sum) * sum_v exp(z_v - max) * (z_v - max)
  double weighted = 0.0;
  for (size_t v = 0; v < vocab; ++v) {
    double z = double(row[v]) - max_logit;
    weighted += std::exp(z) * z;
  }
  double entropy = log_sum - weighted / sum;
  double kl = std::log(double(vocab)) - entropy;
  return std::max(kl, 0.0);  // guards tiny negative round-off
}

template <typename T>
double self_certainty_raw_impl(std::span<const T> logits, size_t rows, size_t vocab) {
  if (rows == 0) fail(ErrorCode::invalid_argument, "self_certainty_raw: empty logit matrix");
  if (vocab < 2) fail(ErrorCode::invalid_argument, "self_certainty_raw: vocab must be >= 2");
  if (logits.size() != rows * vocab)
    fail(ErrorCode::invalid_argument, "self_certainty_raw: matrix shape mismatch");
  for (T v : logits) {
    if (!std::isfinite(double(v)))
      fail(ErrorCode::validation, "self_certainty_raw: non-finite logit");
  }
  double total = 0.0;
  for (size_t r = 0; r < rows; ++r) total += row_certainty(logits.data() + r * vocab, vocab);
  return total / double(rows);
}

const std::regex& number_regex() {
  static const std::regex re(R"((\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)");
  return re;
}

const std::regex& confidence_regex() {
  static const std::regex re(R"(confidence\s*[:=]?\s*((\d+\.?\d*|\.\d+)([eE][-+]?\d+)?))",
                             std::regex::icase);
  return re;
}

std::optional<double> last_match_value(const std::string& text, const std::regex& re,
                                       int capture_group) {
  std::optional<double> value;
  auto begin = std::sregex_iterator(text.begin(), text.end(), re);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    value = std::stod((*it)[size_t(capture_group)].str());
  }
  return value;
}

class SelfCertaintyScorer final : public Scorer {
 public:
  std::string name() const override { return "self_certainty"; }

  std::vector<TraceResult> score(const Dataset& dataset, Granularity granularity,
                                 size_t workers) const override;
};

// Raw certainties per trace: one value per step (step granularity) or one
// value over the concatenated token rows of all steps (response).
struct RawUnit {
  std::vector<double> values;
  std::optional<TraceError> error;
};

RawUnit raw_certainties(const Dataset& dataset, const InteractionTrace& trace,
                        Granularity granularity) {
  RawUnit unit;
  if (!dataset.sidecar) {
    unit.error = {trace.id, ErrorCode::missing_evidence,
                  "trace " + trace.id + ": self_certainty requires a logits sidecar"};
    return unit;
  }
  const LogitsSidecar& sidecar = *dataset.sidecar;
  size_t vocab = size_t(sidecar.vocab_size());

  if (granularity == Granularity::step) {
    for (size_t i = 0; i < trace.steps.size(); ++i) {
      const StepRecord& step = trace.steps[i];
      if (!step.logits_ref) {
        unit.error = {trace.id, ErrorCode::missing_evidence,
                      "trace " + trace.id + ": step " + std::to_string(i + 1) +
                          ": missing logits for self_certainty"};
        return unit;
      }
      std::vector<float> rows = sidecar.read_rows(step.logits_ref->row_offset,
                                                  step.logits_ref->row_count);
      unit.values.push_back(
          self_certainty_raw(rows, size_t(step.logits_ref->row_count), vocab));
    }
  } else {
    double total = 0.0;
    uint64_t token_rows = 0;
    for (size_t i = 0; i < trace.steps.size(); ++i) {
      const StepRecord& step = trace.steps[i];
      if (!step.logits_ref) {
        unit.error = {trace.id, ErrorCode::missing_evidence,
                      "trace " + trace.id + ": step " + std::to_string(i + 1) +
                          ": missing logits for self_certainty"};
        return unit;
      }
      std::vector<float> rows = sidecar.read_rows(step.logits_ref->row_offset,
                                                  step.logits_ref->row_count);
      for (uint64_t r = 0; r < step.logits_ref->row_count; ++r) {
        total += row_certainty(rows.data() + r * vocab, vocab);
      }
      token_rows += step.logits_ref->row_count;
    }
    unit.values.push_back(total / double(token_rows));
  }
  return unit;
}

std::vector<TraceResult> SelfCertaintyScorer::score(const Dataset& dataset,
                                                    Granularity granularity,
                                                    size_t workers) const {
  const size_t n = dataset.traces.size();
  std::vector<RawUnit> raws(n);
  parallel_for(n, workers, [&](size_t i) {
    raws[i] = raw_certainties(dataset, dataset.traces[i], granularity);
  });

  // Dataset-level min-max normalization; strictly monotone, so score order
  // is the reverse of raw-certainty order.
  double min_raw = std::numeric_limits<double>::infinity();
  double max_raw = -std::numeric_limits<double>::infinity();
  for (const RawUnit& u : raws) {
    if (u.error) continue;
    for (double v : u.values) {
      min_raw = std::min(min_raw, v);
      max_raw = std::max(max_raw, v);
    }
  }
  const bool degenerate = !(max_raw > min_raw);

  auto to_failure = [&](double raw) {
    if (degenerate) return kDegenerateNormalizedScore;
    return 1.0 - (raw - min_raw) / (max_raw - min_raw);
  };

  std::vector<TraceResult> results(n);
  for (size_t i = 0; i < n; ++i) {
    if (raws[i].error) {
      results[i].error = raws[i].error;
      continue;
    }
    ScorerOutput out;
    out.scorer_name = name();
    out.granularity = granularity;
    if (granularity == Granularity::step) {
      for (size_t s = 0; s < raws[i].values.size(); ++s) {
        out.per_step.push_back(to_failure(raws[i].values[s]));
        out.diagnostics["raw_certainty_step_" + std::to_string(s + 1)] = raws[i].values[s];
      }
    } else {
      out.whole = to_failure(raws[i].values[0]);
      out.diagnostics["raw_certainty"] = raws[i].values[0];
    }
    results[i].output = std::move(out);
  }
  return results;
}

class VerbalizedScorer final : public Scorer {
 public:
  explicit VerbalizedScorer(Scale scale) : scale_(scale) {}

  std::string name() const override { return "verbalized"; }

  std::vector<TraceResult> score(const Dataset& dataset, Granularity granularity,
                                 size_t workers) const override {
    std::vector<TraceResult> results(dataset.traces.size());
    parallel_for(dataset.traces.size(), workers, [&](size_t i) {
      results[i] = score_trace(dataset.traces[i], granularity);
    });
    return results;
  }

 private:
  TraceResult score_trace(const InteractionTrace& trace, Granularity granularity) const {
    TraceResult result;
    ScorerOutput out;
    out.scorer_name = name();
    out.granularity = granularity;
    size_t clamped = 0;

    auto parse_step = [&](size_t index) -> std::optional<double> {
      const StepRecord& step = trace.steps[index];
      if (!step.verbalized_text) {
        result.error = {trace.id, ErrorCode::missing_evidence,
                        "trace " + trace.id + ": step " + std::to_string(index + 1) +
                            ": no verbalized_text"};
        return std::nullopt;
      }
      try {
        ParsedConfidence parsed = parse_verbalized(*step.verbalized_text, scale_);
        if (parsed.clamped) ++clamped;
        return parsed.failure;
      } catch (const Error& e) {
        result.error = {trace.id, e.code(),
                        "trace " + trace.id + ": step " + std::to_string(index + 1) + ": " +
                            e.what()};
        return std::nullopt;
      }
    };

    if (granularity == Granularity::step) {
      for (size_t i = 0; i < trace.steps.size(); ++i) {
        auto f = parse_step(i);
        if (!f) return result;
        out.per_step.push_back(*f);
      }
    } else {
      // The response-level statement lives on the final step.
      auto f = parse_step(trace.steps.size() - 1);
      if (!f) return result;
      out.whole = *f;
    }
    if (clamped > 0) out.diagnostics["clamped_values"] = double(clamped);
    result.output = std::move(out);
    return result;
  }

  Scale scale_;
};

class PrecomputedScorer final : public Scorer {
 public:
  explicit PrecomputedScorer(std::string key) : key_(std::move(key)) {}

  std::string name() const override { return "precomputed:" + key_; }

  std::vector<TraceResult> score(const Dataset& dataset, Granularity granularity,
                                 size_t workers) const override {
    std::vector<TraceResult> results(dataset.traces.size());
    parallel_for(dataset.traces.size(), workers, [&](size_t i) {
      try {
        results[i].output = precomputed_score(dataset.traces[i], key_, granularity);
      } catch (const Error& e) {
        results[i].error = {dataset.traces[i].id, e.code(), e.what()};
      }
    });
    return results;
  }

 private:
  std::string key_;
};

}  // namespace

const char* granularity_name(Granularity g) {
  return g == Granularity::step ? "step" : "response";
}

Granularity granularity_from(std::string_view name) {
  if (name == "step") return Granularity::step;
  if (name == "response") return Granularity::response;
  fail(ErrorCode::invalid_argument, "unknown granularity: " + std::string(name));
}

double self_certainty_raw(std::span<const float> logits, size_t rows, size_t vocab) {
  return self_certainty_raw_impl(logits, rows, vocab);
}

double self_certainty_raw(std::span<const double> logits, size_t rows, size_t vocab) {
  return self_certainty_raw_impl(logits, rows, vocab);
}

ParsedConfidence parse_verbalized(const std::string& text, Scale scale) {
  std::optional<double> value = last_match_value(text, confidence_regex(), 1);
  if (!value) value = last_match_value(text, number_regex(), 0);
  if (!value) fail(ErrorCode::parse_missing, "no confidence number found in text");

  double confidence = *value;
  if (scale == Scale::percent) confidence /= 100.0;
  ParsedConfidence parsed;
  if (confidence < 0.0 || confidence > 1.0) {
    parsed.clamped = true;
    confidence = std::clamp(confidence, 0.0, 1.0);
  }
  parsed.failure = 1.0 - confidence;
  return parsed;
}

ScorerOutput precomputed_score(const InteractionTrace& trace, const std::string& scorer_name,
                               Granularity granularity) {
  ScorerOutput out;
  out.scorer_name = "precomputed:" + scorer_name;
  out.granularity = granularity;

  auto read_step = [&](size_t index) -> double {
    const StepRecord& step = trace.steps[index];
    auto it = step.precomputed_scores.find(scorer_name);
    if (it == step.precomputed_scores.end()) {
      fail(ErrorCode::missing_score, "trace " + trace.id + ": step " + std::to_string(index + 1) +
                                         ": no precomputed score '" + scorer_name + "'");
    }
    const PrecomputedScore& score = it->second;
    if (!(score.value >= 0.0 && score.value <= 1.0)) {
      fail(ErrorCode::range, "trace " + trace.id + ": step " + std::to_string(index + 1) +
                                 ": precomputed score '" + scorer_name + "' value " +
                                 std::to_string(score.value) + " outside [0,1]");
    }
    return score.orientation == Orientation::confidence ? 1.0 - score.value : score.value;
  };

  if (granularity == Granularity::step) {
    for (size_t i = 0; i < trace.steps.size(); ++i) out.per_step.push_back(read_step(i));
  } else {
    // Response-level entries live on the final step.
    out.whole = read_step(trace.steps.size() - 1);
  }
  return out;
}

std::unique_ptr<Scorer> make_self_certainty() { return std::make_unique<SelfCertaintyScorer>(); }

std::unique_ptr<Scorer> make_verbalized(Scale scale) {
  return std::make_unique<VerbalizedScorer>(scale);
}

std::unique_ptr<Scorer> make_precomputed(std::string name) {
  return std::make_unique<PrecomputedScorer>(std::move(name));
}

void parallel_for(size_t n, size_t workers, const std::function<void(size_t)>& fn) {
  if (workers == 0) workers = std::max<size_t>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  size_t first_error_index = n;

  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace stepguard::scorers
