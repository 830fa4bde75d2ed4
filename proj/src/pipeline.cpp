#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "strings.hpp"

namespace stepguard::pipeline {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

int teacher_label(const StepRecord& step) {
  if (step.step_label) return *step.step_label;
  return normalize_for_match(step.response) != normalize_for_match(*step.gold_response) ? 1 : 0;
}

}  // namespace

const char* aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::max_failure: return "max_failure";
    case Aggregator::mean: return "mean";
    case Aggregator::noisy_or: return "noisy_or";
  }
  return "unknown";
}

Aggregator aggregator_from(std::string_view name) {
  if (name == "max_failure") return Aggregator::max_failure;
  if (name == "mean") return Aggregator::mean;
  if (name == "noisy_or") return Aggregator::noisy_or;
  fail(ErrorCode::invalid_argument, "unknown aggregator: " + std::string(name));
}

double aggregate_steps(std::span<const double> per_step, Aggregator aggregator) {
  if (per_step.empty()) fail(ErrorCode::invalid_argument, "aggregate_steps: empty score list");
  for (double v : per_step) {
    if (!(v >= 0.0 && v <= 1.0))
      fail(ErrorCode::range, "aggregate_steps: score " + fmt_double(v) + " outside [0,1]");
  }
  switch (aggregator) {
    case Aggregator::max_failure:
      return *std::max_element(per_step.begin(), per_step.end());
    case Aggregator::mean: {
      double sum = 0.0;
      for (double v : per_step) sum += v;
      return sum / double(per_step.size());
    }
    case Aggregator::noisy_or: {
      double survive = 1.0;
      for (double v : per_step) survive *= (1.0 - v);
      return 1.0 - survive;
    }
  }
  fail(ErrorCode::internal, "aggregate_steps: unreachable");
}

bool flag(const ScoredInteraction& scored, double threshold) {
  return scored.aggregate >= threshold;
}

ScoreRunResult score_dataset(const Dataset& dataset, const scorers::Scorer& scorer,
                             scorers::Granularity granularity, const ScoreRunOptions& options) {
  std::vector<scorers::TraceResult> raw = scorer.score(dataset, granularity, options.workers);
  if (raw.size() != dataset.traces.size())
    fail(ErrorCode::internal, "scorer returned " + std::to_string(raw.size()) +
                                  " results for " + std::to_string(dataset.traces.size()) +
                                  " traces");

  ScoreRunResult result;
  for (size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].error) {
      result.errors.push_back(*raw[i].error);
      continue;
    }
    const scorers::ScorerOutput& out = *raw[i].output;
    ScoredInteraction scored;
    scored.trace_id = dataset.traces[i].id;
    scored.scorer = out.scorer_name;
    scored.granularity = granularity;
    if (granularity == scorers::Granularity::step) {
      if (out.per_step.size() != dataset.traces[i].steps.size())
        fail(ErrorCode::internal, "trace " + scored.trace_id + ": scorer emitted " +
                                      std::to_string(out.per_step.size()) + " scores for " +
                                      std::to_string(dataset.traces[i].steps.size()) + " steps");
      scored.per_step = out.per_step;
      scored.aggregate = aggregate_steps(scored.per_step, options.aggregator);
      scored.aggregator = aggregator_name(options.aggregator);
    } else {
      if (!out.whole)
        fail(ErrorCode::internal, "trace " + scored.trace_id + ": response scorer emitted no score");
      scored.aggregate = *out.whole;
    }
    if (options.flag_threshold) {
      scored.threshold = options.flag_threshold;
      scored.flagged = flag(scored, *options.flag_threshold);
    }
    result.scored.push_back(std::move(scored));
  }

  double error_fraction =
      dataset.traces.empty() ? 0.0 : double(result.errors.size()) / double(dataset.traces.size());
  if (!result.errors.empty() && error_fraction > options.max_error_fraction) {
    const scorers::TraceError& first = result.errors.front();
    fail(first.code, "scoring failed on " + std::to_string(result.errors.size()) + " of " +
                         std::to_string(dataset.traces.size()) + " traces; first: " +
                         first.message);
  }

  std::sort(result.scored.begin(), result.scored.end(),
            [](const ScoredInteraction& a, const ScoredInteraction& b) {
              return a.trace_id < b.trace_id;
            });
  return result;
}

TeacherForcedResult build_teacher_forced(std::span<const InteractionTrace> traces) {
  TeacherForcedResult result;
  for (const InteractionTrace& trace : traces) {
    bool all_gold = std::all_of(trace.steps.begin(), trace.steps.end(),
                                [](const StepRecord& s) { return s.gold_response.has_value(); });
    if (!all_gold) {
      result.skipped_trace_ids.push_back(trace.id);
      continue;
    }
    for (size_t i = 0; i < trace.steps.size(); ++i) {
      TrainingExample ex;
      ex.context = trace.context;
      for (size_t k = 0; k <= i; ++k) ex.queries.push_back(trace.steps[k].query);
      for (size_t k = 0; k < i; ++k) ex.gold_history.push_back(*trace.steps[k].gold_response);
      ex.response = trace.steps[i].response;
      ex.label = teacher_label(trace.steps[i]);
      result.examples.push_back(std::move(ex));
    }
  }
  return result;
}

void save_scored(std::span<const ScoredInteraction> scored, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write scored file: " + path.string());
  for (const ScoredInteraction& s : scored) {
    ordered_json j;
    j["trace_id"] = s.trace_id;
    j["scorer"] = s.scorer;
    j["granularity"] = scorers::granularity_name(s.granularity);
    if (s.granularity == scorers::Granularity::step) {
      j["per_step"] = s.per_step;
      j["aggregator"] = s.aggregator;
    }
    j["aggregate"] = s.aggregate;
    if (s.threshold) j["threshold"] = *s.threshold;
    if (s.flagged) j["flagged"] = *s.flagged;
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorCode::io, "short write on scored file: " + path.string());
}

std::vector<ScoredInteraction> load_scored(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open scored file: " + path.string());

  std::vector<ScoredInteraction> result;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + " line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::parse, where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) fail(ErrorCode::parse, where + ": expected object");

    ScoredInteraction s;
    try {
      s.trace_id = j.at("trace_id").get<std::string>();
      s.scorer = j.at("scorer").get<std::string>();
      s.granularity = scorers::granularity_from(j.at("granularity").get<std::string>());
      s.aggregate = j.at("aggregate").get<double>();
      if (s.granularity == scorers::Granularity::step) {
        s.per_step = j.at("per_step").get<std::vector<double>>();
        s.aggregator = j.value("aggregator", std::string("max_failure"));
        if (s.per_step.empty()) fail(ErrorCode::parse, where + ": empty per_step");
      } else if (j.contains("per_step")) {
        fail(ErrorCode::parse, where + ": response-granularity row carries per_step");
      }
      if (j.contains("threshold") && !j["threshold"].is_null())
        s.threshold = j["threshold"].get<double>();
      if (j.contains("flagged") && !j["flagged"].is_null()) s.flagged = j["flagged"].get<bool>();
    } catch (const json::exception& e) {
      fail(ErrorCode::parse, where + ": " + e.what());
    }
    if (!(s.aggregate >= 0.0 && s.aggregate <= 1.0))
      fail(ErrorCode::validation, where + ": aggregate outside [0,1]");
    result.push_back(std::move(s));
  }
  return result;
}

void save_training_examples(std::span<const TrainingExample> examples,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write training file: " + path.string());
  for (const TrainingExample& ex : examples) {
    ordered_json j;
    j["context"] = ex.context;
    j["queries"] = ex.queries;
    j["gold_history"] = ex.gold_history;
    j["response"] = ex.response;
    j["label"] = ex.label;
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorCode::io, "short write on training file: " + path.string());
}

std::vector<TrainingExample> load_training_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open training file: " + path.string());

  std::vector<TrainingExample> result;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + " line " + std::to_string(line_no);
    try {
      json j = json::parse(line);
      TrainingExample ex;
      ex.context = j.at("context").get<std::string>();
      ex.queries = j.at("queries").get<std::vector<std::string>>();
      ex.gold_history = j.at("gold_history").get<std::vector<std::string>>();
      ex.response = j.at("response").get<std::string>();
      ex.label = j.at("label").get<int>();
      if (ex.label != 0 && ex.label != 1) fail(ErrorCode::parse, where + ": label must be 0 or 1");
      if (ex.gold_history.size() + 1 != ex.queries.size())
        fail(ErrorCode::validation, where + ": history length must be query count - 1");
      result.push_back(std::move(ex));
    } catch (const json::exception& e) {
      fail(ErrorCode::parse, where + ": " + e.what());
    }
  }
  return result;
}

}  // namespace stepguard::pipeline
