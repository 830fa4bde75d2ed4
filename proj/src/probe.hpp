#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scorers.hpp"

namespace stepguard::probe {

// Feed-forward classifier over final hidden states: ReLU hidden layers and a
// sigmoid head emitting a failure score. Weight layer k maps dims[k] ->
// dims[k+1]; weights are row-major (out x in).
struct ProbeModel {
  std::vector<size_t> dims;  // [d_in, hidden..., 1]
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  uint64_t seed = 0;
  std::string config_hash;  // stamped at training time

  size_t input_dim() const { return dims.front(); }
  size_t layer_count() const { return weights.size(); }
  size_t parameter_count() const;

  // Uniform fan-in init: U[-1/sqrt(fan_in), 1/sqrt(fan_in)] from the seed.
  static ProbeModel init(size_t d_in, std::span<const size_t> hidden, uint64_t seed);

  double forward(std::span<const double> x) const;
};

// Default hidden widths giving five weight layers.
inline constexpr size_t kDefaultHidden[] = {256, 128, 64, 32};

struct TrainConfig {
  double learning_rate = 1e-3;
  size_t batch_size = 32;
  size_t epochs = 100;
  uint64_t seed = 0;
  double validation_fraction = 0.2;
  size_t patience = 10;  // early stop after this many epochs without val improvement
  std::vector<size_t> hidden = {std::begin(kDefaultHidden), std::end(kDefaultHidden)};

  void validate() const;
  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
};

using Example = std::pair<std::vector<double>, int>;

// (hidden_state, step_label) pairs from every step carrying both.
std::vector<Example> extract_examples(const Dataset& dataset);

struct TrainCurvePoint {
  size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ProbeModel model;  // best validation loss snapshot
  std::vector<TrainCurvePoint> curve;
  size_t best_epoch = 0;
};

// Minimizes binary cross-entropy with Adam over a fixed, seeded batch order.
// Deterministic given seed, data, and config.
TrainResult train(std::span<const Example> data, const TrainConfig& config);

// Mean BCE loss of the model on a batch.
double loss(const ProbeModel& model, std::span<const Example> batch);

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

// Analytic gradient of `loss` w.r.t. every parameter on the batch.
Gradients gradients(const ProbeModel& model, std::span<const Example> batch);

void save(const ProbeModel& model, const std::filesystem::path& path);
ProbeModel load(const std::filesystem::path& path);

void save_curve_csv(std::span<const TrainCurvePoint> curve, const std::filesystem::path& path);

// Step-granularity scorer over hidden states; reports as "activations".
std::unique_ptr<scorers::Scorer> make_activation_scorer(ProbeModel model);

}  // namespace stepguard::probe
