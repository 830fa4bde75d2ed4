#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scorers.hpp"
#include "trace.hpp"

namespace stepguard::pipeline {

enum class Aggregator { max_failure, mean, noisy_or };

const char* aggregator_name(Aggregator a);
Aggregator aggregator_from(std::string_view name);

// Collapses per-step failure scores to one interaction score. max_failure is
// the canonical rule: flagging its aggregate at threshold t is exactly
// "some step has failure score >= t".
double aggregate_steps(std::span<const double> per_step, Aggregator aggregator);

struct ScoredInteraction {
  std::string trace_id;
  std::string scorer;
  scorers::Granularity granularity = scorers::Granularity::step;
  std::vector<double> per_step;  // step granularity only
  double aggregate = 0.0;
  std::string aggregator;  // step granularity only
  std::optional<double> threshold;
  std::optional<bool> flagged;
};

bool flag(const ScoredInteraction& scored, double threshold);

struct ScoreRunOptions {
  Aggregator aggregator = Aggregator::max_failure;
  // Run fails when more than this fraction of traces error.
  double max_error_fraction = 0.0;
  size_t workers = 0;  // 0 = hardware concurrency
  std::optional<double> flag_threshold;
};

struct ScoreRunResult {
  std::vector<ScoredInteraction> scored;  // sorted by trace id
  std::vector<scorers::TraceError> errors;
};

// Scores every trace with the scorer at the given granularity, aggregates
// step scores, applies the error policy, and sorts results by trace id so
// parallel execution never changes artifacts.
ScoreRunResult score_dataset(const Dataset& dataset, const scorers::Scorer& scorer,
                             scorers::Granularity granularity,
                             const ScoreRunOptions& options = {});

// One teacher-forced record: the candidate response R_i judged against the
// gold history R̂_{1:i-1}, never the agent's own prior responses.
struct TrainingExample {
  std::string context;
  std::vector<std::string> queries;       // Q_1..Q_i
  std::vector<std::string> gold_history;  // gold responses 1..i-1
  std::string response;                   // agent response R_i
  int label = 0;                          // 1 iff R_i is incorrect
};

struct TeacherForcedResult {
  std::vector<TrainingExample> examples;
  std::vector<std::string> skipped_trace_ids;  // traces missing gold responses
};

// Emits n examples per fully-gold trace. The label prefers a stored
// step_label; otherwise it is exact string inequality after whitespace
// normalization and lowercasing.
TeacherForcedResult build_teacher_forced(std::span<const InteractionTrace> traces);

void save_scored(std::span<const ScoredInteraction> scored, const std::filesystem::path& path);
std::vector<ScoredInteraction> load_scored(const std::filesystem::path& path);

void save_training_examples(std::span<const TrainingExample> examples,
                            const std::filesystem::path& path);
std::vector<TrainingExample> load_training_examples(const std::filesystem::path& path);

}  // namespace stepguard::pipeline
