#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "error.hpp"
#include "rng.hpp"

namespace stepguard::synth {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

double draw_score(const ScoreDist& dist, Rng& rng) {
  if (dist.point) return *dist.point;
  return rng.beta(dist.alpha, dist.beta);
}

std::string format_confidence(double failure) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.4f", 1.0 - failure);
  return buf;
}

}  // namespace

void ScoreDist::validate(const std::string& what) const {
  if (point) {
    if (!(*point >= 0.0 && *point <= 1.0))
      fail(ErrorCode::invalid_argument, what + ": point mass must lie in [0,1]");
    return;
  }
  if (!(alpha > 0.0) || !(beta > 0.0))
    fail(ErrorCode::invalid_argument, what + ": Beta parameters must be > 0");
}

ordered_json ScoreDist::to_json() const {
  if (point) return ordered_json{{"point", *point}};
  return ordered_json{{"alpha", alpha}, {"beta", beta}};
}

ScoreDist ScoreDist::from_json(const json& j, const std::string& path) {
  if (!j.is_object()) fail(ErrorCode::parse, path + ": expected object");
  ScoreDist dist;
  if (j.contains("point")) {
    dist.point = j.at("point").get<double>();
  } else {
    if (!j.contains("alpha") || !j.contains("beta"))
      fail(ErrorCode::parse, path + ": expected {alpha, beta} or {point}");
    dist.alpha = j.at("alpha").get<double>();
    dist.beta = j.at("beta").get<double>();
  }
  dist.validate(path);
  return dist;
}

void SynthConfig::validate() const {
  if (trace_count == 0) fail(ErrorCode::invalid_argument, "synth: trace_count must be >= 1");
  if (steps_min == 0) fail(ErrorCode::invalid_argument, "synth: steps_min must be >= 1");
  if (steps_max < steps_min)
    fail(ErrorCode::invalid_argument, "synth: steps_max must be >= steps_min");
  if (id_prefix.empty()) fail(ErrorCode::invalid_argument, "synth: id_prefix must be non-empty");
  if (!(step_error_prob >= 0.0 && step_error_prob <= 1.0))
    fail(ErrorCode::invalid_argument, "synth: step_error_prob must lie in [0,1]");
  score_correct.validate("synth: score_correct");
  score_incorrect.validate("synth: score_incorrect");
  if (hidden_dim == 0) fail(ErrorCode::invalid_argument, "synth: hidden_dim must be >= 1");
  if (!(hidden_sigma > 0.0)) fail(ErrorCode::invalid_argument, "synth: hidden_sigma must be > 0");
  if (vocab_size < 2) fail(ErrorCode::invalid_argument, "synth: vocab_size must be >= 2");
  if (!(logit_noise >= 0.0)) fail(ErrorCode::invalid_argument, "synth: logit_noise must be >= 0");
}

ordered_json SynthConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["trace_count"] = trace_count;
  j["steps"] = ordered_json{{"min", steps_min}, {"max", steps_max}};
  j["id_prefix"] = id_prefix;
  j["step_error_prob"] = step_error_prob;
  j["score_model"] =
      ordered_json{{"correct", score_correct.to_json()}, {"incorrect", score_incorrect.to_json()}};
  j["hidden_model"] = ordered_json{{"dim", hidden_dim},
                                   {"sigma", hidden_sigma},
                                   {"mean_correct", hidden_mean_correct},
                                   {"mean_incorrect", hidden_mean_incorrect}};
  j["vocab_size"] = vocab_size;
  j["logit_model"] = ordered_json{{"peak_correct", logit_peak_correct},
                                  {"peak_incorrect", logit_peak_incorrect},
                                  {"noise_sigma", logit_noise}};
  return j;
}

SynthConfig SynthConfig::from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::parse, "synth config: expected object");
  SynthConfig cfg;
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    if (j.contains("trace_count")) cfg.trace_count = j.at("trace_count").get<size_t>();
    if (j.contains("steps")) {
      const json& s = j.at("steps");
      if (s.contains("fixed")) {
        cfg.steps_min = cfg.steps_max = s.at("fixed").get<size_t>();
      } else {
        cfg.steps_min = s.at("min").get<size_t>();
        cfg.steps_max = s.at("max").get<size_t>();
      }
    }
    if (j.contains("id_prefix")) cfg.id_prefix = j.at("id_prefix").get<std::string>();
    if (j.contains("step_error_prob")) cfg.step_error_prob = j.at("step_error_prob").get<double>();
    if (j.contains("score_model")) {
      const json& m = j.at("score_model");
      cfg.score_correct = ScoreDist::from_json(m.at("correct"), "synth config: score_model.correct");
      cfg.score_incorrect =
          ScoreDist::from_json(m.at("incorrect"), "synth config: score_model.incorrect");
    }
    if (j.contains("hidden_model")) {
      const json& m = j.at("hidden_model");
      if (m.contains("dim")) cfg.hidden_dim = m.at("dim").get<size_t>();
      if (m.contains("sigma")) cfg.hidden_sigma = m.at("sigma").get<double>();
      if (m.contains("mean_correct")) cfg.hidden_mean_correct = m.at("mean_correct").get<double>();
      if (m.contains("mean_incorrect"))
        cfg.hidden_mean_incorrect = m.at("mean_incorrect").get<double>();
    }
    if (j.contains("vocab_size")) cfg.vocab_size = j.at("vocab_size").get<size_t>();
    if (j.contains("logit_model")) {
      const json& m = j.at("logit_model");
      if (m.contains("peak_correct")) cfg.logit_peak_correct = m.at("peak_correct").get<double>();
      if (m.contains("peak_incorrect"))
        cfg.logit_peak_incorrect = m.at("peak_incorrect").get<double>();
      if (m.contains("noise_sigma")) cfg.logit_noise = m.at("noise_sigma").get<double>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("synth config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

GeneratedData generate(const SynthConfig& config) {
  config.validate();
  Rng rng(Rng::derive(config.seed, 0x5e9d));

  GeneratedData data;
  data.vocab = config.vocab_size;

  int id_width = 1;
  for (size_t v = config.trace_count; v >= 10; v /= 10) ++id_width;

  uint64_t next_row = 0;
  for (size_t t = 0; t < config.trace_count; ++t) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%0*zu", id_width, t + 1);
    InteractionTrace trace;
    trace.id = config.id_prefix + idbuf;
    trace.context = "synthetic context for " + trace.id;

    size_t n = config.steps_min == config.steps_max
                   ? config.steps_min
                   : config.steps_min +
                         size_t(rng.uniform_int(uint64_t(config.steps_max - config.steps_min + 1)));

    int response_label = 0;
    std::vector<int> labels(n);
    for (size_t s = 0; s < n; ++s) {
      labels[s] = rng.bernoulli(config.step_error_prob) ? 1 : 0;
      response_label = std::max(response_label, labels[s]);
    }

    for (size_t s = 0; s < n; ++s) {
      StepRecord step;
      const std::string tag = trace.id + ":s" + std::to_string(s + 1);
      step.query = "synthetic query " + tag;
      step.gold_response = "gold response " + tag;
      if (labels[s] == 1) {
        step.response = "wrong response " + tag + " " + kWrongResponseSentinel + tag + ">>";
      } else {
        step.response = *step.gold_response;
      }
      step.step_label = labels[s];

      const ScoreDist& score_dist = labels[s] == 1 ? config.score_incorrect : config.score_correct;
      double failure = draw_score(score_dist, rng);
      step.precomputed_scores["synthetic_step"] = {failure, Orientation::failure};
      step.verbalized_text = "Synthetic self-assessment. Confidence: " + format_confidence(failure);

      std::vector<double> hidden(config.hidden_dim);
      double mean = labels[s] == 1 ? config.hidden_mean_incorrect : config.hidden_mean_correct;
      for (double& h : hidden) h = rng.normal(mean, config.hidden_sigma);
      step.hidden_state = std::move(hidden);

      double peak = labels[s] == 1 ? config.logit_peak_incorrect : config.logit_peak_correct;
      size_t peak_index = size_t(rng.uniform_int(config.vocab_size));
      for (size_t v = 0; v < config.vocab_size; ++v) {
        double logit = rng.normal(0.0, config.logit_noise);
        if (v == peak_index) logit += peak;
        data.logit_rows.push_back(float(logit));
      }
      step.logits_ref = LogitsRef{next_row, 1};
      ++next_row;

      trace.steps.push_back(std::move(step));
    }

    // Holistic view: one draw conditioned on a uniformly random step's class.
    size_t glance = size_t(rng.uniform_int(uint64_t(n)));
    const ScoreDist& response_dist =
        labels[glance] == 1 ? config.score_incorrect : config.score_correct;
    double response_failure = draw_score(response_dist, rng);
    trace.steps.back().precomputed_scores["synthetic_response"] = {response_failure,
                                                                   Orientation::failure};

    trace.response_label = response_label;
    trace.answer_label = labels[n - 1];  // final step stands in for the answer
    data.traces.push_back(std::move(trace));
  }

  validate_dataset(data.traces, nullptr);
  return data;
}

void generate_to_files(const SynthConfig& config, const std::filesystem::path& traces_path,
                       const std::filesystem::path& sidecar_path) {
  GeneratedData data = generate(config);
  LogitsSidecar::write(sidecar_path, data.vocab, data.logit_rows);
  save_traces(data.traces, traces_path);
}

double expected_step_auc(const SynthConfig& config, size_t draws) {
  config.validate();
  if (draws == 0) fail(ErrorCode::invalid_argument, "expected_step_auc: draws must be > 0");
  Rng rng(Rng::derive(config.seed, 0xa0c0));
  size_t wins = 0, ties = 0;
  for (size_t i = 0; i < draws; ++i) {
    double f_correct = draw_score(config.score_correct, rng);
    double f_incorrect = draw_score(config.score_incorrect, rng);
    if (f_incorrect > f_correct)
      ++wins;
    else if (f_incorrect == f_correct)
      ++ties;
  }
  return (double(wins) + 0.5 * double(ties)) / double(draws);
}

}  // namespace stepguard::synth
