#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trace.hpp"

namespace stepguard::synth {

// Score distribution on [0,1] in failure orientation: Beta(alpha,beta) or a
// degenerate point mass.
struct ScoreDist {
  std::optional<double> point;
  double alpha = 1.0;
  double beta = 1.0;

  void validate(const std::string& what) const;
  nlohmann::ordered_json to_json() const;
  static ScoreDist from_json(const nlohmann::json& j, const std::string& path);
};

// Generative model for oracle datasets. Step labels are i.i.d.
// Bernoulli(step_error_prob); every piece of evidence is drawn from a
// class-conditional model so scorers have a known, dial-able signal:
//   - "synthetic_step" precomputed score per step, from the step's class.
//   - "synthetic_response" precomputed score on the final step, one draw per
//     trace conditioned on a uniformly random step's class. A holistic look
//     at the interaction sees one step's worth of signal, so single step
//     errors get diluted, which is what makes the response scorer weaker
//     than aggregated step scores.
//   - hidden states from class-conditional Gaussians.
//   - one logit row per step, peaked for correct steps and flatter for
//     incorrect ones, so self-certainty carries signal.
//   - verbalized_text stating confidence = 1 - step score, 4 decimals.
struct SynthConfig {
  uint64_t seed = 0;
  size_t trace_count = 1;
  size_t steps_min = 1;
  size_t steps_max = 1;
  // Prepended to generated trace ids. Sharded generation derives one seed
  // per shard (Rng::derive) and gives each shard its own prefix so ids stay
  // unique across shards.
  std::string id_prefix = "t";
  double step_error_prob = 0.1;
  ScoreDist score_correct{std::nullopt, 2.0, 8.0};
  ScoreDist score_incorrect{std::nullopt, 8.0, 2.0};
  size_t hidden_dim = 8;
  double hidden_sigma = 1.0;
  double hidden_mean_correct = -2.0;
  double hidden_mean_incorrect = 2.0;
  size_t vocab_size = 16;
  double logit_peak_correct = 4.0;
  double logit_peak_incorrect = 1.0;
  double logit_noise = 0.25;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct GeneratedData {
  std::vector<InteractionTrace> traces;
  std::vector<float> logit_rows;  // row-major, vocab_size wide
  size_t vocab = 0;
};

// Fully deterministic per seed; response_label is the max over step labels
// by construction.
GeneratedData generate(const SynthConfig& config);

// Writes trace JSONL plus the logits sidecar.
void generate_to_files(const SynthConfig& config, const std::filesystem::path& traces_path,
                       const std::filesystem::path& sidecar_path);

// Monte Carlo estimate of P(F_incorrect > F_correct) + 0.5 P(equal) under
// the two score laws, seeded from the config: the value the empirical
// step-level AUC of the planted scorer converges to.
double expected_step_auc(const SynthConfig& config, size_t draws = 1000000);

// Sentinel substring planted only inside incorrect agent responses. Gold
// responses never contain it, which is what teacher-forcing leak checks key
// on.
inline constexpr const char* kWrongResponseSentinel = "<<agent-wrong:";

}  // namespace stepguard::synth
