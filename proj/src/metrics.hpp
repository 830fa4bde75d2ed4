#pragma once

#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace stepguard::metrics {

// One scored, labeled unit. Scores are failure scores in [0,1]; label 1
// (incorrect) is the positive class everywhere in this module.
struct LabeledScore {
  std::string trace_id;
  double score = 0.0;
  int label = 0;
  std::set<std::string> subset_flags;
};

struct RocPoint {
  // +infinity marks the (0,0) anchor above the maximum score.
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// Mann-Whitney AUC with half credit for ties, computed via average ranks.
// Requires at least one positive and one negative.
double auc_roc(std::span<const LabeledScore> data);

struct FprAtRecall {
  double target = 0.9;
  double fpr = 1.0;
  bool achieved = false;
  // Maximum recall over admissible thresholds (those not flagging the whole
  // dataset); 0 when no threshold is admissible.
  double max_recall = 0.0;
  // Operating threshold: the minimal-FPR threshold meeting the target, or
  // when unachievable the max-recall threshold with minimal FPR. NaN when no
  // admissible threshold exists.
  double threshold = std::numeric_limits<double>::quiet_NaN();
  double recall = 0.0;  // recall at `threshold`
};

// Sweeps thresholds over the distinct score values, predicting positive for
// score >= t. Thresholds that flag every unit are inadmissible.
FprAtRecall fpr_at_recall(std::span<const LabeledScore> data, double target = 0.9);

struct EceResult {
  int bins = 10;
  double value = 0.0;
};

// Expected calibration error over equal-width bins (last bin right-closed):
// sum over bins of (|b|/m) * |mean score - positive rate|.
EceResult ece(std::span<const LabeledScore> data, int bins = 10);

// Fraction of units carrying `subset` that are flagged. `flagged` is
// parallel to `data`.
double subset_recall(std::span<const LabeledScore> data, const std::vector<bool>& flagged,
                     const std::string& subset);

// Points at every distinct score plus the (0,0) anchor; ends at (1,1).
// Trapezoidal area over these points equals auc_roc.
std::vector<RocPoint> roc_curve(std::span<const LabeledScore> data);

struct EvalOptions {
  double recall_target = 0.9;
  int ece_bins = 10;
  // Overrides the operating threshold used for subset recalls.
  std::optional<double> threshold_override;
};

struct EvaluationReport {
  double auc = 0.0;
  FprAtRecall fpr_at_recall;
  EceResult ece;
  std::map<std::string, double> subset_recalls;
  std::vector<RocPoint> roc_points;
  size_t positives = 0;
  size_t negatives = 0;
  double operating_threshold = std::numeric_limits<double>::quiet_NaN();
};

// Full metric bundle. Subset recalls are computed at the fpr_at_recall
// operating point unless overridden, over every flag present in the data.
EvaluationReport evaluate(std::span<const LabeledScore> data, const EvalOptions& options = {});

}  // namespace stepguard::metrics
