#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sidecar.hpp"

namespace stepguard {

struct LogitsRef {
  uint64_t row_offset = 0;
  uint64_t row_count = 0;

  bool operator==(const LogitsRef&) const = default;
};

enum class Orientation { failure, confidence };

const char* orientation_name(Orientation o);
Orientation orientation_from(std::string_view name);

struct PrecomputedScore {
  double value = 0.0;
  Orientation orientation = Orientation::failure;

  bool operator==(const PrecomputedScore&) const = default;
};

// One step of a multi-step interaction: the query put to the agent, the
// agent's response, and whatever per-step evidence the log carried.
struct StepRecord {
  std::string query;
  std::string response;
  std::optional<std::string> gold_response;
  std::optional<int> step_label;  // 1 = this step is incorrect
  std::optional<LogitsRef> logits_ref;
  std::optional<std::vector<double>> hidden_state;
  std::optional<std::string> verbalized_text;
  std::map<std::string, PrecomputedScore> precomputed_scores;

  bool operator==(const StepRecord&) const = default;
};

struct InteractionTrace {
  std::string id;
  std::string context;
  std::vector<StepRecord> steps;
  std::optional<int> response_label;  // 1 = interaction as a whole incorrect
  std::optional<int> answer_label;    // 1 = final answer incorrect

  size_t step_count() const { return steps.size(); }

  bool operator==(const InteractionTrace&) const = default;
};

// Per-trace invariants: at least one step, binary labels, label consistency
// when every step is labeled. Throws Error(validation).
void validate_trace(const InteractionTrace& trace);

// Dataset-level invariants: unique ids, consistent hidden-state
// dimensionality, and (when a sidecar is given) logits references in bounds.
void validate_dataset(const std::vector<InteractionTrace>& traces,
                      const LogitsSidecar* sidecar);

nlohmann::ordered_json trace_to_json(const InteractionTrace& trace);
// `where` names the input location (e.g. "line 3") for error messages.
InteractionTrace trace_from_json(const nlohmann::json& j, const std::string& where);

// JSONL, one trace per line. Loading validates per-trace and dataset-level
// invariants (without sidecar bounds, which need the sidecar file).
std::vector<InteractionTrace> load_traces(const std::filesystem::path& path);
void save_traces(const std::vector<InteractionTrace>& traces,
                 const std::filesystem::path& path);

// A trace file plus its optional logits sidecar, cross-validated.
struct Dataset {
  std::vector<InteractionTrace> traces;
  std::optional<LogitsSidecar> sidecar;

  // Opens and validates. Any trace holding a logits_ref while no sidecar
  // path is given (or the file is absent) is a dangling reference.
  static Dataset open(const std::filesystem::path& traces_path,
                      const std::optional<std::filesystem::path>& sidecar_path);
  static Dataset from_memory(std::vector<InteractionTrace> traces,
                             std::optional<LogitsSidecar> sidecar);

  const InteractionTrace* find(std::string_view id) const;
};

}  // namespace stepguard
