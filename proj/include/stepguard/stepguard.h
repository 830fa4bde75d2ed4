/*
 * stepguard C API
 *
 * Failure detection for multi-step LLM interactions: trace files, confidence
 * scorers at response and step granularity, aggregation, metrics, a
 * teacher-forced training-set builder, an activations probe, a judge client,
 * and a synthetic-data oracle.
 *
 * Conventions:
 *  - Every fallible function returns sg_status; SG_OK is 0. On failure,
 *    sg_last_error() returns a thread-local message describing what went
 *    wrong in the failing call.
 *  - Handles are opaque; free them with the matching sg_*_free function.
 *    Handles are immutable after creation and safe to share across threads.
 *  - Strings returned through char** out-parameters are heap-allocated;
 *    release them with sg_string_free.
 *  - Scores are failure scores in [0,1]: higher means more likely incorrect.
 *    Labels use 1 = incorrect.
 */

#ifndef STEPGUARD_H
#define STEPGUARD_H

#include <stddef.h>
#include <stdint.h>

#ifndef SG_API
#if defined(_WIN32)
#define SG_API
#else
#define SG_API __attribute__((visibility("default")))
#endif
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sg_status {
  SG_OK = 0,
  SG_ERR_INVALID_ARGUMENT = 1,
  SG_ERR_PARSE = 2,
  SG_ERR_VALIDATION = 3,
  SG_ERR_IO = 4,
  SG_ERR_FORMAT = 5,
  SG_ERR_BOUNDS = 6,
  SG_ERR_MISSING_EVIDENCE = 7,
  SG_ERR_MISSING_SCORE = 8,
  SG_ERR_RANGE = 9,
  SG_ERR_UNDEFINED_METRIC = 10,
  SG_ERR_PARSE_MISSING = 11,
  SG_ERR_DIVERGENCE = 12,
  SG_ERR_JUDGE_UNAVAILABLE = 13,
  SG_ERR_JUDGE_UNPARSEABLE = 14,
  SG_ERR_LABEL_UNPARSEABLE = 15,
  SG_ERR_INTERNAL = 16
} sg_status;

/* Toolkit version string, e.g. "0.1.0". */
SG_API const char* sg_version(void);

/* Message for the most recent failing call on this thread ("" if none). */
SG_API const char* sg_last_error(void);

SG_API void sg_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Datasets: trace JSONL plus optional logits sidecar.                 */
/* ------------------------------------------------------------------ */

typedef struct sg_dataset sg_dataset;

/* sidecar_path may be NULL when no trace references logits. */
SG_API sg_status sg_dataset_open(const char* traces_path, const char* sidecar_path, sg_dataset** out);
SG_API sg_status sg_dataset_save(const sg_dataset* dataset, const char* traces_path);
SG_API size_t sg_dataset_trace_count(const sg_dataset* dataset);
SG_API void sg_dataset_free(sg_dataset* dataset);

/* ------------------------------------------------------------------ */
/* Synthetic data with planted ground truth.                           */
/* ------------------------------------------------------------------ */

/* config_json: seed, trace_count, steps{fixed|min,max}, step_error_prob,
 * score_model{correct,incorrect each {alpha,beta}|{point}}, hidden_model,
 * vocab_size, logit_model. `out` may be NULL when only files are wanted. */
SG_API sg_status sg_synth_generate(const char* config_json, const char* traces_path,
                            const char* sidecar_path, sg_dataset** out);

/* Monte Carlo estimate of the step-level AUC implied by the score model. */
SG_API sg_status sg_synth_expected_step_auc(const char* config_json, double* out);

/* ------------------------------------------------------------------ */
/* Scoring.                                                            */
/* ------------------------------------------------------------------ */

typedef struct sg_scored sg_scored;

/* options_json:
 *   scorer        "self_certainty" | "verbalized" | "precomputed:<name>" |
 *                 "activations" | "judge"
 *   granularity   "step" | "response"
 *   aggregator    "max_failure" (default) | "mean" | "noisy_or"
 *   max_error_fraction  double, default 0
 *   workers       int, default hardware concurrency
 *   flag_threshold optional double
 *   verbalized_scale "unit" | "percent" (default unit)
 *   probe_model   path, required for "activations"
 *   judge         object, required for "judge": endpoint, model,
 *                 max_concurrency, retry_limit, timeout_s, template_id,
 *                 template_dir, scale, initial_backoff_ms. The bearer token
 *                 is read from STEPGUARD_JUDGE_TOKEN. */
SG_API sg_status sg_score_run(const sg_dataset* dataset, const char* options_json, sg_scored** out);

SG_API sg_status sg_scored_save(const sg_scored* scored, const char* path);
SG_API sg_status sg_scored_load(const char* path, sg_scored** out);
SG_API size_t sg_scored_count(const sg_scored* scored);
SG_API void sg_scored_free(sg_scored* scored);

/* Mean per-token KL divergence from uniform of softmax(logits); rows x vocab
 * row-major. Output lies in [0, ln vocab]; higher = more certain. */
SG_API sg_status sg_self_certainty_raw(const float* logits, size_t rows, size_t vocab, double* out);

/* Parses a verbalized confidence from text; scale is "unit" or "percent".
 * failure_out = 1 - confidence; clamped_out (may be NULL) set to 1 when the
 * value was clamped into [0,1]. */
SG_API sg_status sg_parse_verbalized(const char* text, const char* scale, double* failure_out,
                              int* clamped_out);

/* Aggregates per-step failure scores: "max_failure", "mean" or "noisy_or". */
SG_API sg_status sg_aggregate_steps(const double* scores, size_t count, const char* aggregator,
                             double* out);

/* ------------------------------------------------------------------ */
/* Evaluation.                                                         */
/* ------------------------------------------------------------------ */

typedef struct sg_report sg_report;

/* Evaluates scored interactions against labels carried by the dataset.
 * options_json: label_field "response"|"answer" (default response),
 * recall_target (default 0.9), ece_bins (default 10), threshold (optional
 * operating-point override). Scored ids must match dataset ids exactly. */
SG_API sg_status sg_evaluate(const sg_scored* scored, const sg_dataset* labels, const char* options_json,
                      sg_report** out);

/* Metrics over raw arrays: labels are 0/1 with 1 = incorrect. options_json
 * accepts recall_target and ece_bins. */
SG_API sg_status sg_metrics_compute(const double* failure_scores, const int32_t* labels, size_t count,
                             const char* options_json, sg_report** out);

/* Full report as JSON (auc_roc, fpr_at_recall, ece, subset_recalls,
 * roc_points, counts, and the configured/default metric blocks when the
 * report came from sg_evaluate). */
SG_API sg_status sg_report_to_json(const sg_report* report, char** out);
SG_API void sg_report_free(sg_report* report);

/* ------------------------------------------------------------------ */
/* Teacher forcing.                                                    */
/* ------------------------------------------------------------------ */

/* Writes a training JSONL (context, queries, gold_history, response, label).
 * Traces missing any gold response are skipped and counted. */
SG_API sg_status sg_build_teacher_forced(const sg_dataset* dataset, const char* out_path,
                                  size_t* emitted_out, size_t* skipped_out);

/* ------------------------------------------------------------------ */
/* Activations probe.                                                  */
/* ------------------------------------------------------------------ */

typedef struct sg_probe sg_probe;

/* Trains on (hidden_state, step_label) pairs extracted from the dataset.
 * config_json: learning_rate, batch_size, epochs, seed, validation_fraction,
 * patience, hidden (array of widths). curve_csv_path may be NULL. */
SG_API sg_status sg_probe_train(const sg_dataset* dataset, const char* config_json,
                         const char* curve_csv_path, sg_probe** out);
SG_API sg_status sg_probe_save(const sg_probe* probe, const char* path);
SG_API sg_status sg_probe_load(const char* path, sg_probe** out);
SG_API sg_status sg_probe_forward(const sg_probe* probe, const double* x, size_t dim,
                           double* failure_out);
SG_API void sg_probe_free(sg_probe* probe);

/* ------------------------------------------------------------------ */
/* Judge client.                                                       */
/* ------------------------------------------------------------------ */

/* Renders the judging prompt for a trace. granularity "step" requires a
 * 1-based step_index; pass 0 for "response". template_id may be NULL for the
 * default. */
SG_API sg_status sg_render_judge_prompt(const sg_dataset* dataset, const char* trace_id,
                                 const char* granularity, int32_t step_index,
                                 const char* template_id, char** out);

/* One judge call. transcript_json_out (may be NULL) receives the prompt,
 * raw reply, attempts and latency. */
SG_API sg_status sg_judge_score(const char* judge_config_json, const sg_dataset* dataset,
                         const char* trace_id, const char* granularity, int32_t step_index,
                         double* failure_out, char** transcript_json_out);

/* Grades response vs gold: label_out is 0 (correct) or 1 (incorrect). */
SG_API sg_status sg_judge_label(const char* judge_config_json, const char* response, const char* gold,
                         const char* context, int32_t* label_out);

/* ------------------------------------------------------------------ */
/* Utilities.                                                          */
/* ------------------------------------------------------------------ */

/* Lowercase hex SHA-256; out_hex must hold at least 65 bytes. */
SG_API sg_status sg_sha256_file(const char* path, char* out_hex);
SG_API sg_status sg_sha256_bytes(const void* data, size_t len, char* out_hex);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* STEPGUARD_H */
