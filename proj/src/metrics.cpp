#include "metrics.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace stepguard::metrics {

namespace {

struct ClassCounts {
  size_t positives = 0;
  size_t negatives = 0;
};

ClassCounts count_classes(std::span<const LabeledScore> data, const char* op) {
  ClassCounts c;
  for (const LabeledScore& d : data) {
    if (!std::isfinite(d.score) || d.score < 0.0 || d.score > 1.0)
      fail(ErrorCode::validation,
           std::string(op) + ": score out of [0,1] for trace " + d.trace_id);
    if (d.label != 0 && d.label != 1)
      fail(ErrorCode::validation, std::string(op) + ": label must be 0 or 1 for trace " + d.trace_id);
    if (d.label == 1)
      ++c.positives;
    else
      ++c.negatives;
  }
  if (c.positives == 0 || c.negatives == 0)
    fail(ErrorCode::undefined_metric,
         std::string(op) + ": needs at least one positive and one negative");
  return c;
}

// Distinct scores descending with cumulative positive/negative counts at
// "score >= threshold".
struct SweepPoint {
  double threshold;
  size_t tp;  // positives flagged
  size_t fp;  // negatives flagged
};

std::vector<SweepPoint> threshold_sweep(std::span<const LabeledScore> data) {
  std::vector<const LabeledScore*> sorted;
  sorted.reserve(data.size());
  for (const LabeledScore& d : data) sorted.push_back(&d);
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledScore* a, const LabeledScore* b) { return a->score > b->score; });

  std::vector<SweepPoint> sweep;
  size_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j < sorted.size() && sorted[j]->score == sorted[i]->score) {
      if (sorted[j]->label == 1)
        ++tp;
      else
        ++fp;
      ++j;
    }
    sweep.push_back({sorted[i]->score, tp, fp});
    i = j;
  }
  return sweep;
}

}  // namespace

double auc_roc(std::span<const LabeledScore> data) {
  ClassCounts c = count_classes(data, "auc_roc");

  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return data[a].score < data[b].score; });

  // Average ranks over tie groups; rank sums stay exact in double (integer
  // halves), so this matches brute-force pair counting bit-for-bit after the
  // same final division.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && data[order[j]].score == data[order[i]].score) ++j;
    double avg_rank = (double(i + 1) + double(j)) / 2.0;
    for (size_t k = i; k < j; ++k) {
      if (data[order[k]].label == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }

  double p = double(c.positives);
  double n = double(c.negatives);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

FprAtRecall fpr_at_recall(std::span<const LabeledScore> data, double target) {
  ClassCounts c = count_classes(data, "fpr_at_recall");
  if (!(target > 0.0 && target <= 1.0))
    fail(ErrorCode::invalid_argument, "fpr_at_recall: target must be in (0,1]");

  FprAtRecall result;
  result.target = target;

  const double p = double(c.positives);
  const double n = double(c.negatives);
  bool best_found = false;
  double best_fpr = 0.0, best_recall = 0.0, best_threshold = 0.0;
  bool max_found = false;
  double max_recall = 0.0, max_recall_fpr = 0.0, max_recall_threshold = 0.0;

  for (const SweepPoint& s : threshold_sweep(data)) {
    size_t flagged = s.tp + s.fp;
    if (flagged == data.size()) continue;  // flags everything: inadmissible
    double recall = double(s.tp) / p;
    double fpr = double(s.fp) / n;
    if (!max_found || recall > max_recall ||
        (recall == max_recall && (fpr < max_recall_fpr ||
                                  (fpr == max_recall_fpr && s.threshold > max_recall_threshold)))) {
      max_found = true;
      max_recall = recall;
      max_recall_fpr = fpr;
      max_recall_threshold = s.threshold;
    }
    if (recall >= target) {
      if (!best_found || fpr < best_fpr || (fpr == best_fpr && recall > best_recall) ||
          (fpr == best_fpr && recall == best_recall && s.threshold > best_threshold)) {
        best_found = true;
        best_fpr = fpr;
        best_recall = recall;
        best_threshold = s.threshold;
      }
    }
  }

  if (best_found) {
    result.achieved = true;
    result.fpr = best_fpr;
    result.recall = best_recall;
    result.threshold = best_threshold;
    result.max_recall = max_found ? max_recall : 0.0;
  } else {
    result.achieved = false;
    result.fpr = 1.0;
    if (max_found) {
      result.max_recall = max_recall;
      result.threshold = max_recall_threshold;
      result.recall = max_recall;
    }
  }
  return result;
}

EceResult ece(std::span<const LabeledScore> data, int bins) {
  if (bins < 1) fail(ErrorCode::invalid_argument, "ece: bins must be >= 1");
  if (data.empty()) fail(ErrorCode::undefined_metric, "ece: empty data");

  std::vector<size_t> count(size_t(bins), 0);
  std::vector<double> score_sum(size_t(bins), 0.0);
  std::vector<size_t> pos_count(size_t(bins), 0);

  for (const LabeledScore& d : data) {
    if (!std::isfinite(d.score) || d.score < 0.0 || d.score > 1.0)
      fail(ErrorCode::validation, "ece: score out of [0,1] for trace " + d.trace_id);
    if (d.label != 0 && d.label != 1)
      fail(ErrorCode::validation, "ece: label must be 0 or 1 for trace " + d.trace_id);
    size_t b = std::min(size_t(d.score * bins), size_t(bins - 1));
    ++count[b];
    score_sum[b] += d.score;
    if (d.label == 1) ++pos_count[b];
  }

  double total = double(data.size());
  double value = 0.0;
  for (size_t b = 0; b < size_t(bins); ++b) {
    if (count[b] == 0) continue;
    double mean_score = score_sum[b] / double(count[b]);
    double pos_rate = double(pos_count[b]) / double(count[b]);
    value += (double(count[b]) / total) * std::abs(mean_score - pos_rate);
  }
  return {bins, value};
}

double subset_recall(std::span<const LabeledScore> data, const std::vector<bool>& flagged,
                     const std::string& subset) {
  if (flagged.size() != data.size())
    fail(ErrorCode::invalid_argument, "subset_recall: flag list size mismatch");
  size_t members = 0, hit = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    if (!data[i].subset_flags.contains(subset)) continue;
    ++members;
    if (flagged[i]) ++hit;
  }
  if (members == 0)
    fail(ErrorCode::undefined_metric, "subset_recall: subset '" + subset + "' is empty");
  return double(hit) / double(members);
}

std::vector<RocPoint> roc_curve(std::span<const LabeledScore> data) {
  ClassCounts c = count_classes(data, "roc_curve");
  const double p = double(c.positives);
  const double n = double(c.negatives);

  std::vector<RocPoint> points;
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (const SweepPoint& s : threshold_sweep(data)) {
    points.push_back({s.threshold, double(s.fp) / n, double(s.tp) / p});
  }
  return points;
}

EvaluationReport evaluate(std::span<const LabeledScore> data, const EvalOptions& options) {
  EvaluationReport report;
  ClassCounts c = count_classes(data, "evaluate");
  report.positives = c.positives;
  report.negatives = c.negatives;
  report.auc = auc_roc(data);
  report.fpr_at_recall = fpr_at_recall(data, options.recall_target);
  report.ece = ece(data, options.ece_bins);
  report.roc_points = roc_curve(data);

  double threshold = options.threshold_override ? *options.threshold_override
                                                : report.fpr_at_recall.threshold;
  report.operating_threshold = threshold;

  std::set<std::string> flags;
  for (const LabeledScore& d : data) flags.insert(d.subset_flags.begin(), d.subset_flags.end());
  if (!flags.empty() && std::isfinite(threshold)) {
    std::vector<bool> flagged(data.size());
    for (size_t i = 0; i < data.size(); ++i) flagged[i] = data[i].score >= threshold;
    for (const std::string& flag : flags) {
      report.subset_recalls[flag] = subset_recall(data, flagged, flag);
    }
  }
  return report;
}

}  // namespace stepguard::metrics
