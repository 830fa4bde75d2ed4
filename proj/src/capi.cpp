#include "stepguard/stepguard.h"

#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "error.hpp"
#include "judge.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "probe.hpp"
#include "report.hpp"
#include "scorers.hpp"
#include "sha256.hpp"
#include "synth.hpp"
#include "trace.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

struct sg_dataset {
  stepguard::Dataset dataset;
};

struct sg_scored {
  std::vector<stepguard::pipeline::ScoredInteraction> rows;
};

struct sg_report {
  ordered_json doc;
};

struct sg_probe {
  stepguard::probe::ProbeModel model;
};

namespace {

thread_local std::string t_last_error;

sg_status status_of(stepguard::ErrorCode code) {
  using stepguard::ErrorCode;
  switch (code) {
    case ErrorCode::invalid_argument: return SG_ERR_INVALID_ARGUMENT;
    case ErrorCode::parse: return SG_ERR_PARSE;
    case ErrorCode::validation: return SG_ERR_VALIDATION;
    case ErrorCode::io: return SG_ERR_IO;
    case ErrorCode::format: return SG_ERR_FORMAT;
    case ErrorCode::bounds: return SG_ERR_BOUNDS;
    case ErrorCode::missing_evidence: return SG_ERR_MISSING_EVIDENCE;
    case ErrorCode::missing_score: return SG_ERR_MISSING_SCORE;
    case ErrorCode::range: return SG_ERR_RANGE;
    case ErrorCode::undefined_metric: return SG_ERR_UNDEFINED_METRIC;
    case ErrorCode::parse_missing: return SG_ERR_PARSE_MISSING;
    case ErrorCode::divergence: return SG_ERR_DIVERGENCE;
    case ErrorCode::judge_unavailable: return SG_ERR_JUDGE_UNAVAILABLE;
    case ErrorCode::judge_unparseable: return SG_ERR_JUDGE_UNPARSEABLE;
    case ErrorCode::label_unparseable: return SG_ERR_LABEL_UNPARSEABLE;
    case ErrorCode::internal: return SG_ERR_INTERNAL;
  }
  return SG_ERR_INTERNAL;
}

template <typename Fn>
sg_status wrap(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return SG_OK;
  } catch (const stepguard::Error& e) {
    t_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    t_last_error = "out of memory";
    return SG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return SG_ERR_INTERNAL;
  }
}

sg_status invalid(const char* message) {
  t_last_error = message;
  return SG_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_options(const char* options_json, const char* what) {
  if (options_json == nullptr || *options_json == '\0') return json::object();
  try {
    json j = json::parse(options_json);
    if (!j.is_object())
      stepguard::fail(stepguard::ErrorCode::parse, std::string(what) + ": expected a JSON object");
    return j;
  } catch (const json::exception& e) {
    stepguard::fail(stepguard::ErrorCode::parse, std::string(what) + ": " + e.what());
  }
}

std::unique_ptr<stepguard::scorers::Scorer> make_scorer_from_options(const json& options) {
  using namespace stepguard;
  if (!options.contains("scorer"))
    fail(ErrorCode::invalid_argument, "score options: missing \"scorer\"");
  std::string spec = options.at("scorer").get<std::string>();

  if (spec == "self_certainty") return scorers::make_self_certainty();

  if (spec == "verbalized") {
    scorers::Scale scale = scorers::Scale::unit;
    if (options.value("verbalized_scale", "unit") == std::string("percent"))
      scale = scorers::Scale::percent;
    return scorers::make_verbalized(scale);
  }

  if (spec.rfind("precomputed:", 0) == 0) {
    std::string key = spec.substr(std::strlen("precomputed:"));
    if (key.empty()) fail(ErrorCode::invalid_argument, "score options: empty precomputed name");
    return scorers::make_precomputed(key);
  }

  if (spec == "activations") {
    if (!options.contains("probe_model"))
      fail(ErrorCode::invalid_argument, "score options: \"activations\" needs probe_model path");
    probe::ProbeModel model = probe::load(options.at("probe_model").get<std::string>());
    return probe::make_activation_scorer(std::move(model));
  }

  if (spec == "judge") {
    if (!options.contains("judge"))
      fail(ErrorCode::invalid_argument, "score options: \"judge\" needs a judge config object");
    return judge::make_judge_scorer(judge::JudgeConfig::from_json(options.at("judge")));
  }

  fail(ErrorCode::invalid_argument, "unknown scorer: " + spec);
}

stepguard::judge::JudgeConfig judge_config_from(const char* judge_config_json) {
  json j = parse_options(judge_config_json, "judge config");
  return stepguard::judge::JudgeConfig::from_json(j);
}

}  // namespace

extern "C" {

const char* sg_version(void) { return "0.1.0"; }

const char* sg_last_error(void) { return t_last_error.c_str(); }

void sg_string_free(char* s) { delete[] s; }

sg_status sg_dataset_open(const char* traces_path, const char* sidecar_path, sg_dataset** out) {
  if (!traces_path || !out) return invalid("sg_dataset_open: null argument");
  return wrap([&] {
    std::optional<std::filesystem::path> sidecar;
    if (sidecar_path && *sidecar_path) sidecar = std::filesystem::path(sidecar_path);
    auto handle = std::make_unique<sg_dataset>();
    handle->dataset = stepguard::Dataset::open(traces_path, sidecar);
    *out = handle.release();
  });
}

sg_status sg_dataset_save(const sg_dataset* dataset, const char* traces_path) {
  if (!dataset || !traces_path) return invalid("sg_dataset_save: null argument");
  return wrap([&] { stepguard::save_traces(dataset->dataset.traces, traces_path); });
}

size_t sg_dataset_trace_count(const sg_dataset* dataset) {
  return dataset ? dataset->dataset.traces.size() : 0;
}

void sg_dataset_free(sg_dataset* dataset) { delete dataset; }

sg_status sg_synth_generate(const char* config_json, const char* traces_path,
                            const char* sidecar_path, sg_dataset** out) {
  if (!config_json || !traces_path || !sidecar_path)
    return invalid("sg_synth_generate: null argument");
  return wrap([&] {
    json j = parse_options(config_json, "synth config");
    stepguard::synth::SynthConfig config = stepguard::synth::SynthConfig::from_json(j);
    stepguard::synth::generate_to_files(config, traces_path, sidecar_path);
    if (out) {
      auto handle = std::make_unique<sg_dataset>();
      handle->dataset = stepguard::Dataset::open(traces_path, std::filesystem::path(sidecar_path));
      *out = handle.release();
    }
  });
}

sg_status sg_synth_expected_step_auc(const char* config_json, double* out) {
  if (!config_json || !out) return invalid("sg_synth_expected_step_auc: null argument");
  return wrap([&] {
    json j = parse_options(config_json, "synth config");
    stepguard::synth::SynthConfig config = stepguard::synth::SynthConfig::from_json(j);
    *out = stepguard::synth::expected_step_auc(config);
  });
}

sg_status sg_score_run(const sg_dataset* dataset, const char* options_json, sg_scored** out) {
  if (!dataset || !out) return invalid("sg_score_run: null argument");
  return wrap([&] {
    using namespace stepguard;
    json options = parse_options(options_json, "score options");
    std::unique_ptr<scorers::Scorer> scorer = make_scorer_from_options(options);
    scorers::Granularity granularity =
        scorers::granularity_from(options.value("granularity", "step"));

    pipeline::ScoreRunOptions run;
    run.aggregator = pipeline::aggregator_from(options.value("aggregator", "max_failure"));
    run.max_error_fraction = options.value("max_error_fraction", 0.0);
    run.workers = options.value("workers", size_t(0));
    if (options.contains("flag_threshold") && !options.at("flag_threshold").is_null())
      run.flag_threshold = options.at("flag_threshold").get<double>();

    pipeline::ScoreRunResult result =
        pipeline::score_dataset(dataset->dataset, *scorer, granularity, run);
    auto handle = std::make_unique<sg_scored>();
    handle->rows = std::move(result.scored);
    *out = handle.release();
  });
}

sg_status sg_scored_save(const sg_scored* scored, const char* path) {
  if (!scored || !path) return invalid("sg_scored_save: null argument");
  return wrap([&] { stepguard::pipeline::save_scored(scored->rows, path); });
}

sg_status sg_scored_load(const char* path, sg_scored** out) {
  if (!path || !out) return invalid("sg_scored_load: null argument");
  return wrap([&] {
    auto handle = std::make_unique<sg_scored>();
    handle->rows = stepguard::pipeline::load_scored(path);
    *out = handle.release();
  });
}

size_t sg_scored_count(const sg_scored* scored) { return scored ? scored->rows.size() : 0; }

void sg_scored_free(sg_scored* scored) { delete scored; }

sg_status sg_self_certainty_raw(const float* logits, size_t rows, size_t vocab, double* out) {
  if (!logits || !out) return invalid("sg_self_certainty_raw: null argument");
  return wrap([&] {
    *out = stepguard::scorers::self_certainty_raw({logits, rows * vocab}, rows, vocab);
  });
}

sg_status sg_parse_verbalized(const char* text, const char* scale, double* failure_out,
                              int* clamped_out) {
  if (!text || !scale || !failure_out) return invalid("sg_parse_verbalized: null argument");
  return wrap([&] {
    using namespace stepguard;
    scorers::Scale s;
    if (std::strcmp(scale, "unit") == 0) {
      s = scorers::Scale::unit;
    } else if (std::strcmp(scale, "percent") == 0) {
      s = scorers::Scale::percent;
    } else {
      fail(ErrorCode::invalid_argument, "scale must be \"unit\" or \"percent\"");
    }
    scorers::ParsedConfidence parsed = scorers::parse_verbalized(text, s);
    *failure_out = parsed.failure;
    if (clamped_out) *clamped_out = parsed.clamped ? 1 : 0;
  });
}

sg_status sg_aggregate_steps(const double* scores, size_t count, const char* aggregator,
                             double* out) {
  if (!scores || !aggregator || !out) return invalid("sg_aggregate_steps: null argument");
  return wrap([&] {
    *out = stepguard::pipeline::aggregate_steps(
        {scores, count}, stepguard::pipeline::aggregator_from(aggregator));
  });
}

sg_status sg_evaluate(const sg_scored* scored, const sg_dataset* labels, const char* options_json,
                      sg_report** out) {
  if (!scored || !labels || !out) return invalid("sg_evaluate: null argument");
  return wrap([&] {
    using namespace stepguard;
    json options = parse_options(options_json, "evaluate options");
    report::EvaluateOptions opts;
    opts.label_field = options.value("label_field", "response");
    opts.recall_target = options.value("recall_target", 0.9);
    opts.ece_bins = options.value("ece_bins", 10);
    if (options.contains("threshold") && !options.at("threshold").is_null())
      opts.threshold_override = options.at("threshold").get<double>();

    auto handle = std::make_unique<sg_report>();
    handle->doc = report::evaluate_scored(scored->rows, labels->dataset.traces, opts);
    *out = handle.release();
  });
}

sg_status sg_metrics_compute(const double* failure_scores, const int32_t* labels, size_t count,
                             const char* options_json, sg_report** out) {
  if (!failure_scores || !labels || !out) return invalid("sg_metrics_compute: null argument");
  return wrap([&] {
    using namespace stepguard;
    json options = parse_options(options_json, "metrics options");
    metrics::EvalOptions opts;
    opts.recall_target = options.value("recall_target", 0.9);
    opts.ece_bins = options.value("ece_bins", 10);

    std::vector<metrics::LabeledScore> data(count);
    for (size_t i = 0; i < count; ++i) {
      data[i].trace_id = std::to_string(i);
      data[i].score = failure_scores[i];
      data[i].label = int(labels[i]);
    }
    auto handle = std::make_unique<sg_report>();
    handle->doc = report::metrics_to_json(metrics::evaluate(data, opts));
    *out = handle.release();
  });
}

sg_status sg_report_to_json(const sg_report* report, char** out) {
  if (!report || !out) return invalid("sg_report_to_json: null argument");
  return wrap([&] { *out = dup_string(report->doc.dump(2)); });
}

void sg_report_free(sg_report* report) { delete report; }

sg_status sg_build_teacher_forced(const sg_dataset* dataset, const char* out_path,
                                  size_t* emitted_out, size_t* skipped_out) {
  if (!dataset || !out_path) return invalid("sg_build_teacher_forced: null argument");
  return wrap([&] {
    using namespace stepguard;
    pipeline::TeacherForcedResult result = pipeline::build_teacher_forced(dataset->dataset.traces);
    pipeline::save_training_examples(result.examples, out_path);
    if (emitted_out) *emitted_out = result.examples.size();
    if (skipped_out) *skipped_out = result.skipped_trace_ids.size();
  });
}

sg_status sg_probe_train(const sg_dataset* dataset, const char* config_json,
                         const char* curve_csv_path, sg_probe** out) {
  if (!dataset || !out) return invalid("sg_probe_train: null argument");
  return wrap([&] {
    using namespace stepguard;
    json j = parse_options(config_json, "probe config");
    probe::TrainConfig config = probe::TrainConfig::from_json(j);
    std::vector<probe::Example> examples = probe::extract_examples(dataset->dataset);
    if (examples.empty())
      fail(ErrorCode::missing_evidence,
           "probe training needs steps carrying both hidden_state and step_label");
    probe::TrainResult result = probe::train(examples, config);
    result.model.config_hash = sha256_hex(json(config.to_json()).dump());
    if (curve_csv_path && *curve_csv_path) probe::save_curve_csv(result.curve, curve_csv_path);
    auto handle = std::make_unique<sg_probe>();
    handle->model = std::move(result.model);
    *out = handle.release();
  });
}

sg_status sg_probe_save(const sg_probe* probe, const char* path) {
  if (!probe || !path) return invalid("sg_probe_save: null argument");
  return wrap([&] { stepguard::probe::save(probe->model, path); });
}

sg_status sg_probe_load(const char* path, sg_probe** out) {
  if (!path || !out) return invalid("sg_probe_load: null argument");
  return wrap([&] {
    auto handle = std::make_unique<sg_probe>();
    handle->model = stepguard::probe::load(path);
    *out = handle.release();
  });
}

sg_status sg_probe_forward(const sg_probe* probe, const double* x, size_t dim,
                           double* failure_out) {
  if (!probe || !x || !failure_out) return invalid("sg_probe_forward: null argument");
  return wrap([&] { *failure_out = probe->model.forward({x, dim}); });
}

void sg_probe_free(sg_probe* probe) { delete probe; }

sg_status sg_render_judge_prompt(const sg_dataset* dataset, const char* trace_id,
                                 const char* granularity, int32_t step_index,
                                 const char* template_id, char** out) {
  if (!dataset || !trace_id || !granularity || !out)
    return invalid("sg_render_judge_prompt: null argument");
  return wrap([&] {
    using namespace stepguard;
    const InteractionTrace* trace = dataset->dataset.find(trace_id);
    if (!trace) fail(ErrorCode::invalid_argument, std::string("unknown trace id: ") + trace_id);
    scorers::Granularity g = scorers::granularity_from(granularity);
    std::optional<size_t> step;
    if (g == scorers::Granularity::step) {
      if (step_index < 1)
        fail(ErrorCode::invalid_argument, "step granularity needs step_index >= 1");
      step = size_t(step_index);
    }
    const judge::TemplateSet& templates =
        judge::builtin_templates(template_id && *template_id ? template_id : "v1");
    *out = dup_string(judge::render_judge_prompt(*trace, g, step, templates));
  });
}

sg_status sg_judge_score(const char* judge_config_json, const sg_dataset* dataset,
                         const char* trace_id, const char* granularity, int32_t step_index,
                         double* failure_out, char** transcript_json_out) {
  if (!judge_config_json || !dataset || !trace_id || !granularity || !failure_out)
    return invalid("sg_judge_score: null argument");
  return wrap([&] {
    using namespace stepguard;
    judge::JudgeConfig config = judge_config_from(judge_config_json);
    const InteractionTrace* trace = dataset->dataset.find(trace_id);
    if (!trace) fail(ErrorCode::invalid_argument, std::string("unknown trace id: ") + trace_id);
    scorers::Granularity g = scorers::granularity_from(granularity);
    std::optional<size_t> step;
    if (g == scorers::Granularity::step) {
      if (step_index < 1)
        fail(ErrorCode::invalid_argument, "step granularity needs step_index >= 1");
      step = size_t(step_index);
    }
    judge::JudgeResult result = judge::judge_score(config, *trace, g, step);
    *failure_out = result.failure;
    if (transcript_json_out) {
      ordered_json t;
      t["prompt"] = result.transcript.prompt;
      t["raw_reply"] = result.transcript.raw_reply;
      t["attempts"] = result.transcript.attempts;
      t["latency_ms"] = result.transcript.latency_ms;
      *transcript_json_out = dup_string(t.dump(2));
    }
  });
}

sg_status sg_judge_label(const char* judge_config_json, const char* response, const char* gold,
                         const char* context, int32_t* label_out) {
  if (!judge_config_json || !response || !gold || !context || !label_out)
    return invalid("sg_judge_label: null argument");
  return wrap([&] {
    stepguard::judge::JudgeConfig config = judge_config_from(judge_config_json);
    *label_out = stepguard::judge::judge_label(config, response, gold, context);
  });
}

sg_status sg_sha256_file(const char* path, char* out_hex) {
  if (!path || !out_hex) return invalid("sg_sha256_file: null argument");
  return wrap([&] {
    std::string hex = stepguard::sha256_file_hex(path);
    std::memcpy(out_hex, hex.c_str(), hex.size() + 1);
  });
}

sg_status sg_sha256_bytes(const void* data, size_t len, char* out_hex) {
  if ((!data && len > 0) || !out_hex) return invalid("sg_sha256_bytes: null argument");
  return wrap([&] {
    std::string hex = stepguard::sha256_hex(data, len);
    std::memcpy(out_hex, hex.c_str(), hex.size() + 1);
  });
}

}  // extern "C"
