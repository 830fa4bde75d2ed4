#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "error.hpp"

namespace stepguard::report {

namespace {

using nlohmann::ordered_json;

ordered_json json_number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

std::optional<int> label_of(const InteractionTrace& trace, const std::string& field) {
  if (field == "response") return trace.response_label;
  if (field == "answer") return trace.answer_label;
  fail(ErrorCode::invalid_argument, "label_field must be \"response\" or \"answer\"");
}

bool has_flawed_reasoning_correct_answer(const InteractionTrace& trace) {
  if (!trace.answer_label || *trace.answer_label != 0) return false;
  return std::any_of(trace.steps.begin(), trace.steps.end(), [](const StepRecord& s) {
    return s.step_label && *s.step_label == 1;
  });
}

std::vector<metrics::LabeledScore> to_labeled(
    const std::vector<pipeline::ScoredInteraction>& scored,
    const std::vector<InteractionTrace>& traces, const std::string& label_field,
    bool force_max_failure) {
  std::map<std::string, const InteractionTrace*> by_id;
  for (const InteractionTrace& t : traces) by_id[t.id] = &t;

  std::vector<std::string> orphan_scores, orphan_traces;
  std::map<std::string, const pipeline::ScoredInteraction*> scored_by_id;
  for (const pipeline::ScoredInteraction& s : scored) {
    scored_by_id[s.trace_id] = &s;
    if (!by_id.contains(s.trace_id)) orphan_scores.push_back(s.trace_id);
  }
  for (const InteractionTrace& t : traces) {
    if (!scored_by_id.contains(t.id)) orphan_traces.push_back(t.id);
  }
  if (!orphan_scores.empty() || !orphan_traces.empty()) {
    std::string msg = "scored ids and trace ids do not match;";
    auto append = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (size_t i = 0; i < ids.size() && i < 5; ++i) msg += " " + ids[i];
      if (ids.size() > 5) msg += " (+" + std::to_string(ids.size() - 5) + " more)";
    };
    append("scores without trace", orphan_scores);
    append("traces without score", orphan_traces);
    fail(ErrorCode::validation, msg);
  }

  std::vector<metrics::LabeledScore> labeled;
  labeled.reserve(scored.size());
  for (const pipeline::ScoredInteraction& s : scored) {
    const InteractionTrace& trace = *by_id.at(s.trace_id);
    std::optional<int> label = label_of(trace, label_field);
    if (!label)
      fail(ErrorCode::validation,
           "trace " + trace.id + ": missing " + label_field + " label for evaluation");
    metrics::LabeledScore ls;
    ls.trace_id = s.trace_id;
    ls.label = *label;
    if (force_max_failure && s.granularity == scorers::Granularity::step) {
      ls.score = pipeline::aggregate_steps(s.per_step, pipeline::Aggregator::max_failure);
    } else {
      ls.score = s.aggregate;
    }
    if (has_flawed_reasoning_correct_answer(trace))
      ls.subset_flags.insert(kFlawedReasoningCorrectAnswer);
    labeled.push_back(std::move(ls));
  }
  return labeled;
}

ordered_json metrics_block(const std::vector<metrics::LabeledScore>& labeled,
                           const metrics::EvalOptions& options) {
  return metrics_to_json(metrics::evaluate(labeled, options));
}

}  // namespace

nlohmann::ordered_json metrics_to_json(const metrics::EvaluationReport& report) {
  ordered_json j;
  j["auc_roc"] = report.auc;
  j["fpr_at_recall"] = ordered_json{{"target", report.fpr_at_recall.target},
                                    {"fpr", report.fpr_at_recall.fpr},
                                    {"achieved", report.fpr_at_recall.achieved},
                                    {"max_recall", report.fpr_at_recall.max_recall},
                                    {"threshold", json_number_or_null(report.fpr_at_recall.threshold)},
                                    {"recall", report.fpr_at_recall.recall}};
  j["ece"] = ordered_json{{"bins", report.ece.bins}, {"value", report.ece.value}};
  ordered_json subsets = ordered_json::object();
  for (const auto& [name, value] : report.subset_recalls) subsets[name] = value;
  j["subset_recalls"] = std::move(subsets);
  j["operating_threshold"] = json_number_or_null(report.operating_threshold);
  j["counts"] =
      ordered_json{{"positives", report.positives}, {"negatives", report.negatives}};
  ordered_json points = ordered_json::array();
  for (const metrics::RocPoint& p : report.roc_points) {
    points.push_back(ordered_json{
        {"threshold", json_number_or_null(p.threshold)}, {"fpr", p.fpr}, {"tpr", p.tpr}});
  }
  j["roc_points"] = std::move(points);
  return j;
}

nlohmann::ordered_json evaluate_scored(const std::vector<pipeline::ScoredInteraction>& scored,
                                       const std::vector<InteractionTrace>& traces,
                                       const EvaluateOptions& options) {
  if (scored.empty()) fail(ErrorCode::invalid_argument, "evaluate: no scored interactions");
  const std::string& scorer = scored.front().scorer;
  scorers::Granularity granularity = scored.front().granularity;
  std::string aggregator = scored.front().aggregator;
  for (const pipeline::ScoredInteraction& s : scored) {
    if (s.scorer != scorer || s.granularity != granularity)
      fail(ErrorCode::validation, "evaluate: mixed scorers or granularities in one scored set");
  }
  if (options.label_field != "response" && options.label_field != "answer")
    fail(ErrorCode::invalid_argument, "label_field must be \"response\" or \"answer\"");

  metrics::EvalOptions configured;
  configured.recall_target = options.recall_target;
  configured.ece_bins = options.ece_bins;
  configured.threshold_override = options.threshold_override;

  std::vector<metrics::LabeledScore> labeled =
      to_labeled(scored, traces, options.label_field, /*force_max_failure=*/false);

  ordered_json doc;
  doc["scorer"] = scorer;
  doc["granularity"] = scorers::granularity_name(granularity);
  doc["label_field"] = options.label_field;
  if (scorer.rfind("judge:", 0) == 0) {
    doc["notes"] = "judge scores come from toolkit-defined prompt templates (see templates/)";
  }

  ordered_json configured_block;
  configured_block["aggregator"] =
      granularity == scorers::Granularity::step ? aggregator : "none";
  configured_block["recall_target"] = options.recall_target;
  configured_block["ece_bins"] = options.ece_bins;
  configured_block["threshold_override"] =
      options.threshold_override ? ordered_json(*options.threshold_override) : ordered_json(nullptr);
  configured_block["metrics"] = metrics_block(labeled, configured);
  doc["configured"] = std::move(configured_block);

  // Canonical defaults: max_failure aggregation, recall target 0.9, 10 bins.
  metrics::EvalOptions defaults;
  bool need_reaggregate =
      granularity == scorers::Granularity::step && aggregator != "max_failure";
  std::vector<metrics::LabeledScore> default_labeled =
      need_reaggregate ? to_labeled(scored, traces, options.label_field, true) : labeled;

  ordered_json default_block;
  default_block["aggregator"] =
      granularity == scorers::Granularity::step ? "max_failure" : "none";
  default_block["recall_target"] = defaults.recall_target;
  default_block["ece_bins"] = defaults.ece_bins;
  default_block["threshold_override"] = nullptr;
  default_block["metrics"] = metrics_block(default_labeled, defaults);
  doc["default"] = std::move(default_block);

  return doc;
}

}  // namespace stepguard::report
