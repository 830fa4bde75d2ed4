#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "metrics.hpp"
#include "pipeline.hpp"
#include "trace.hpp"

namespace stepguard::report {

// Subset flag for interactions whose reasoning went wrong somewhere but
// whose final answer is labeled correct.
inline constexpr const char* kFlawedReasoningCorrectAnswer = "flawed_reasoning_correct_answer";

struct EvaluateOptions {
  std::string label_field = "response";  // "response" or "answer"
  double recall_target = 0.9;
  int ece_bins = 10;
  std::optional<double> threshold_override;
};

nlohmann::ordered_json metrics_to_json(const metrics::EvaluationReport& report);

// Joins scored interactions with the labels carried by the traces and emits
// the full report document. The document always contains a canonical
// `default` block (max_failure aggregation, recall target 0.9, 10 ECE bins)
// next to the `configured` one, so reports stay comparable across option
// overrides. Scored ids and trace ids must match exactly; orphans on either
// side are an error.
nlohmann::ordered_json evaluate_scored(const std::vector<pipeline::ScoredInteraction>& scored,
                                       const std::vector<InteractionTrace>& traces,
                                       const EvaluateOptions& options);

}  // namespace stepguard::report
