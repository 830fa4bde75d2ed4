#include "probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "rng.hpp"
#include "strings.hpp"

namespace stepguard::probe {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'P', 'M'};
constexpr uint32_t kVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

// Stable BCE on the pre-sigmoid logit: max(z,0) - z*y + log(1 + exp(-|z|)).
double bce_on_logit(double z, int y) {
  return std::max(z, 0.0) - z * double(y) + std::log1p(std::exp(-std::abs(z)));
}

struct ForwardPass {
  // activations[0] is the input; activations[k] the output of layer k-1
  // (post-ReLU for hidden layers). logit is the pre-sigmoid output.
  std::vector<std::vector<double>> activations;
  double logit = 0.0;
};

ForwardPass forward_pass(const ProbeModel& model, std::span<const double> x) {
  ForwardPass fp;
  fp.activations.resize(model.layer_count() + 1);
  fp.activations[0].assign(x.begin(), x.end());
  for (size_t layer = 0; layer < model.layer_count(); ++layer) {
    size_t in_dim = model.dims[layer];
    size_t out_dim = model.dims[layer + 1];
    const std::vector<double>& w = model.weights[layer];
    const std::vector<double>& b = model.biases[layer];
    const std::vector<double>& in = fp.activations[layer];
    std::vector<double>& out = fp.activations[layer + 1];
    out.assign(out_dim, 0.0);
    for (size_t o = 0; o < out_dim; ++o) {
      double z = b[o];
      const double* row = w.data() + o * in_dim;
      for (size_t i = 0; i < in_dim; ++i) z += row[i] * in[i];
      if (layer + 1 < model.layer_count()) {
        out[o] = std::max(z, 0.0);  // ReLU
      } else {
        out[o] = z;  // head stays a logit
        fp.logit = z;
      }
    }
  }
  return fp;
}

void check_model(const ProbeModel& model) {
  if (model.dims.size() < 2 || model.dims.back() != 1)
    fail(ErrorCode::validation, "probe: dimension chain must end in 1");
  if (model.weights.size() != model.dims.size() - 1 || model.biases.size() != model.weights.size())
    fail(ErrorCode::validation, "probe: layer count mismatch");
  for (size_t layer = 0; layer < model.weights.size(); ++layer) {
    if (model.weights[layer].size() != model.dims[layer] * model.dims[layer + 1] ||
        model.biases[layer].size() != model.dims[layer + 1])
      fail(ErrorCode::validation, "probe: parameter shape mismatch at layer " +
                                      std::to_string(layer));
    for (double v : model.weights[layer])
      if (!std::isfinite(v)) fail(ErrorCode::validation, "probe: non-finite weight");
    for (double v : model.biases[layer])
      if (!std::isfinite(v)) fail(ErrorCode::validation, "probe: non-finite bias");
  }
}

void check_batch(const ProbeModel& model, std::span<const Example> batch) {
  if (batch.empty()) fail(ErrorCode::invalid_argument, "probe: empty batch");
  for (const Example& ex : batch) {
    if (ex.first.size() != model.input_dim())
      fail(ErrorCode::invalid_argument,
           "probe: input dim " + std::to_string(ex.first.size()) + " does not match model dim " +
               std::to_string(model.input_dim()));
    if (ex.second != 0 && ex.second != 1)
      fail(ErrorCode::invalid_argument, "probe: labels must be 0 or 1");
  }
}

Gradients zero_gradients(const ProbeModel& model) {
  Gradients g;
  g.weights.resize(model.layer_count());
  g.biases.resize(model.layer_count());
  for (size_t layer = 0; layer < model.layer_count(); ++layer) {
    g.weights[layer].assign(model.weights[layer].size(), 0.0);
    g.biases[layer].assign(model.biases[layer].size(), 0.0);
  }
  return g;
}

void accumulate_gradients(const ProbeModel& model, const ForwardPass& fp, int label,
                          double scale, Gradients& g) {
  // dL/dz at the head for BCE on a sigmoid output.
  std::vector<double> delta{(sigmoid(fp.logit) - double(label)) * scale};
  for (size_t layer = model.layer_count(); layer-- > 0;) {
    size_t in_dim = model.dims[layer];
    size_t out_dim = model.dims[layer + 1];
    const std::vector<double>& in = fp.activations[layer];
    for (size_t o = 0; o < out_dim; ++o) {
      g.biases[layer][o] += delta[o];
      double* grow = g.weights[layer].data() + o * in_dim;
      for (size_t i = 0; i < in_dim; ++i) grow[i] += delta[o] * in[i];
    }
    if (layer == 0) break;
    std::vector<double> prev_delta(in_dim, 0.0);
    const std::vector<double>& w = model.weights[layer];
    for (size_t o = 0; o < out_dim; ++o) {
      const double* row = w.data() + o * in_dim;
      for (size_t i = 0; i < in_dim; ++i) prev_delta[i] += row[i] * delta[o];
    }
    // ReLU derivative of the layer below: activation value > 0.
    for (size_t i = 0; i < in_dim; ++i) {
      if (fp.activations[layer][i] <= 0.0) prev_delta[i] = 0.0;
    }
    delta = std::move(prev_delta);
  }
}

struct AdamState {
  std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
  uint64_t t = 0;

  explicit AdamState(const ProbeModel& model) {
    m_w.resize(model.layer_count());
    v_w.resize(model.layer_count());
    m_b.resize(model.layer_count());
    v_b.resize(model.layer_count());
    for (size_t layer = 0; layer < model.layer_count(); ++layer) {
      m_w[layer].assign(model.weights[layer].size(), 0.0);
      v_w[layer].assign(model.weights[layer].size(), 0.0);
      m_b[layer].assign(model.biases[layer].size(), 0.0);
      v_b[layer].assign(model.biases[layer].size(), 0.0);
    }
  }

  void step(ProbeModel& model, const Gradients& g, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++t;
    double bc1 = 1.0 - std::pow(beta1, double(t));
    double bc2 = 1.0 - std::pow(beta2, double(t));
    auto update = [&](std::vector<double>& param, const std::vector<double>& grad,
                      std::vector<double>& m, std::vector<double>& v) {
      for (size_t i = 0; i < param.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        param[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
      }
    };
    for (size_t layer = 0; layer < model.layer_count(); ++layer) {
      update(model.weights[layer], g.weights[layer], m_w[layer], v_w[layer]);
      update(model.biases[layer], g.biases[layer], m_b[layer], v_b[layer]);
    }
  }
};

void write_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ofstream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}

class ActivationScorer final : public scorers::Scorer {
 public:
  explicit ActivationScorer(ProbeModel model) : model_(std::move(model)) {}

  std::string name() const override { return "activations"; }

  std::vector<scorers::TraceResult> score(const Dataset& dataset,
                                          scorers::Granularity granularity,
                                          size_t workers) const override {
    std::vector<scorers::TraceResult> results(dataset.traces.size());
    scorers::parallel_for(dataset.traces.size(), workers, [&](size_t i) {
      results[i] = score_trace(dataset.traces[i], granularity);
    });
    return results;
  }

 private:
  scorers::TraceResult score_trace(const InteractionTrace& trace,
                                   scorers::Granularity granularity) const {
    scorers::TraceResult result;
    scorers::ScorerOutput out;
    out.scorer_name = name();
    out.granularity = granularity;

    auto step_score = [&](size_t index) -> std::optional<double> {
      const StepRecord& step = trace.steps[index];
      if (!step.hidden_state) {
        result.error = {trace.id, ErrorCode::missing_evidence,
                        "trace " + trace.id + ": step " + std::to_string(index + 1) +
                            ": no hidden_state for activations scorer"};
        return std::nullopt;
      }
      if (step.hidden_state->size() != model_.input_dim()) {
        result.error = {trace.id, ErrorCode::invalid_argument,
                        "trace " + trace.id + ": step " + std::to_string(index + 1) +
                            ": hidden_state dim " + std::to_string(step.hidden_state->size()) +
                            " does not match probe dim " + std::to_string(model_.input_dim())};
        return std::nullopt;
      }
      return model_.forward(*step.hidden_state);
    };

    if (granularity == scorers::Granularity::step) {
      for (size_t i = 0; i < trace.steps.size(); ++i) {
        auto s = step_score(i);
        if (!s) return result;
        out.per_step.push_back(*s);
      }
    } else {
      // Response-level reading: the final step's hidden state summarizes the
      // interaction up to the end.
      auto s = step_score(trace.steps.size() - 1);
      if (!s) return result;
      out.whole = *s;
    }
    result.output = std::move(out);
    return result;
  }

  ProbeModel model_;
};

}  // namespace

size_t ProbeModel::parameter_count() const {
  size_t n = 0;
  for (size_t layer = 0; layer < weights.size(); ++layer)
    n += weights[layer].size() + biases[layer].size();
  return n;
}

ProbeModel ProbeModel::init(size_t d_in, std::span<const size_t> hidden, uint64_t seed) {
  if (d_in == 0) fail(ErrorCode::invalid_argument, "probe: input dim must be >= 1");
  ProbeModel model;
  model.seed = seed;
  model.dims.push_back(d_in);
  for (size_t h : hidden) {
    if (h == 0) fail(ErrorCode::invalid_argument, "probe: hidden dims must be >= 1");
    model.dims.push_back(h);
  }
  model.dims.push_back(1);

  Rng rng(Rng::derive(seed, 0xb0d5));
  for (size_t layer = 0; layer + 1 < model.dims.size(); ++layer) {
    size_t in_dim = model.dims[layer];
    size_t out_dim = model.dims[layer + 1];
    double bound = 1.0 / std::sqrt(double(in_dim));
    std::vector<double> w(in_dim * out_dim);
    for (double& v : w) v = rng.uniform(-bound, bound);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(out_dim, 0.0);
  }
  return model;
}

double ProbeModel::forward(std::span<const double> x) const {
  if (x.size() != input_dim())
    fail(ErrorCode::invalid_argument, "probe: input dim " + std::to_string(x.size()) +
                                          " does not match model dim " +
                                          std::to_string(input_dim()));
  return sigmoid(forward_pass(*this, x).logit);
}

std::vector<Example> extract_examples(const Dataset& dataset) {
  std::vector<Example> examples;
  for (const InteractionTrace& trace : dataset.traces) {
    for (const StepRecord& step : trace.steps) {
      if (step.hidden_state && step.step_label)
        examples.emplace_back(*step.hidden_state, *step.step_label);
    }
  }
  return examples;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::parse, "probe config: expected object");
  TrainConfig cfg;
  try {
    if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<size_t>();
    if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<size_t>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    if (j.contains("validation_fraction"))
      cfg.validation_fraction = j.at("validation_fraction").get<double>();
    if (j.contains("patience")) cfg.patience = j.at("patience").get<size_t>();
    if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<size_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("probe config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["validation_fraction"] = validation_fraction;
  j["patience"] = patience;
  j["hidden"] = hidden;
  return j;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorCode::invalid_argument, "probe: learning_rate must be > 0");
  if (batch_size == 0) fail(ErrorCode::invalid_argument, "probe: batch_size must be > 0");
  if (epochs == 0) fail(ErrorCode::invalid_argument, "probe: epochs must be > 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    fail(ErrorCode::invalid_argument, "probe: validation_fraction must be in (0,1)");
  if (patience == 0) fail(ErrorCode::invalid_argument, "probe: patience must be > 0");
  if (hidden.empty()) fail(ErrorCode::invalid_argument, "probe: at least one hidden layer");
}

double loss(const ProbeModel& model, std::span<const Example> batch) {
  check_batch(model, batch);
  double total = 0.0;
  for (const Example& ex : batch) {
    total += bce_on_logit(forward_pass(model, ex.first).logit, ex.second);
  }
  return total / double(batch.size());
}

Gradients gradients(const ProbeModel& model, std::span<const Example> batch) {
  check_batch(model, batch);
  Gradients g = zero_gradients(model);
  double scale = 1.0 / double(batch.size());
  for (const Example& ex : batch) {
    ForwardPass fp = forward_pass(model, ex.first);
    accumulate_gradients(model, fp, ex.second, scale, g);
  }
  return g;
}

TrainResult train(std::span<const Example> data, const TrainConfig& config) {
  config.validate();
  if (data.size() < 4)
    fail(ErrorCode::invalid_argument, "probe: need at least 4 examples to train");
  size_t d_in = data.front().first.size();
  size_t positives = 0;
  for (const Example& ex : data) {
    if (ex.first.size() != d_in)
      fail(ErrorCode::invalid_argument, "probe: inconsistent input dims in training data");
    if (ex.second != 0 && ex.second != 1)
      fail(ErrorCode::invalid_argument, "probe: labels must be 0 or 1");
    positives += size_t(ex.second);
  }
  if (positives < 2 || data.size() - positives < 2)
    fail(ErrorCode::validation, "probe: need at least 2 examples per class, got " +
                                    std::to_string(positives) + " positive of " +
                                    std::to_string(data.size()));

  Rng rng(Rng::derive(config.seed, 0x7a11));
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t(0));
  rng.shuffle(order);

  size_t val_count = std::max<size_t>(1, size_t(std::llround(config.validation_fraction *
                                                             double(data.size()))));
  val_count = std::min(val_count, data.size() - 1);
  std::vector<Example> val_set, train_set;
  val_set.reserve(val_count);
  train_set.reserve(data.size() - val_count);
  for (size_t i = 0; i < order.size(); ++i) {
    (i < val_count ? val_set : train_set).push_back(data[order[i]]);
  }

  ProbeModel model = ProbeModel::init(d_in, config.hidden, config.seed);
  AdamState adam(model);

  TrainResult result;
  ProbeModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  size_t best_epoch = 0;
  size_t since_best = 0;

  std::vector<size_t> batch_order(train_set.size());
  std::iota(batch_order.begin(), batch_order.end(), size_t(0));

  for (size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(batch_order);
    for (size_t start = 0; start < batch_order.size(); start += config.batch_size) {
      size_t end = std::min(start + config.batch_size, batch_order.size());
      std::vector<Example> batch;
      batch.reserve(end - start);
      for (size_t k = start; k < end; ++k) batch.push_back(train_set[batch_order[k]]);
      Gradients g = gradients(model, batch);
      adam.step(model, g, config.learning_rate);
    }

    double train_loss = loss(model, train_set);
    double val_loss = loss(model, val_set);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      fail(ErrorCode::divergence, "probe: non-finite loss at epoch " + std::to_string(epoch));
    result.curve.push_back({epoch, train_loss, val_loss});

    if (val_loss < best_val) {
      best_val = val_loss;
      best = model;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  best.seed = config.seed;
  result.model = std::move(best);
  result.best_epoch = best_epoch;
  return result;
}

void save(const ProbeModel& model, const std::filesystem::path& path) {
  check_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write probe model: " + path.string());
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u64(out, model.seed);
  write_u32(out, uint32_t(model.config_hash.size()));
  out.write(model.config_hash.data(), std::streamsize(model.config_hash.size()));
  write_u64(out, uint64_t(model.dims.size()));
  for (size_t d : model.dims) write_u64(out, uint64_t(d));
  for (size_t layer = 0; layer < model.layer_count(); ++layer) {
    for (double v : model.weights[layer]) {
      float f = float(v);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
    for (double v : model.biases[layer]) {
      float f = float(v);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  if (!out) fail(ErrorCode::io, "short write on probe model: " + path.string());
}

ProbeModel load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open probe model: " + path.string());

  auto read_bytes = [&](void* buf, size_t len) {
    in.read(static_cast<char*>(buf), std::streamsize(len));
    if (in.gcount() != std::streamsize(len))
      fail(ErrorCode::format, "truncated probe model: " + path.string());
  };

  char magic[4];
  read_bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorCode::format, "bad probe model magic in " + path.string());
  uint32_t version;
  read_bytes(&version, 4);
  if (version != kVersion)
    fail(ErrorCode::format, "unsupported probe model version " + std::to_string(version));

  ProbeModel model;
  read_bytes(&model.seed, 8);
  uint32_t hash_len;
  read_bytes(&hash_len, 4);
  if (hash_len > 4096) fail(ErrorCode::format, "oversized config hash in probe model");
  model.config_hash.resize(hash_len);
  if (hash_len > 0) read_bytes(model.config_hash.data(), hash_len);
  uint64_t dim_count;
  read_bytes(&dim_count, 8);
  if (dim_count < 2 || dim_count > 64) fail(ErrorCode::format, "bad dimension chain length");
  model.dims.resize(size_t(dim_count));
  for (size_t i = 0; i < model.dims.size(); ++i) {
    uint64_t d;
    read_bytes(&d, 8);
    if (d == 0 || d > (1u << 24)) fail(ErrorCode::format, "bad dimension in probe model");
    model.dims[i] = size_t(d);
  }
  if (model.dims.back() != 1) fail(ErrorCode::format, "probe model head width must be 1");

  for (size_t layer = 0; layer + 1 < model.dims.size(); ++layer) {
    size_t in_dim = model.dims[layer];
    size_t out_dim = model.dims[layer + 1];
    std::vector<double> w(in_dim * out_dim);
    for (double& v : w) {
      float f;
      read_bytes(&f, 4);
      v = double(f);
    }
    std::vector<double> b(out_dim);
    for (double& v : b) {
      float f;
      read_bytes(&f, 4);
      v = double(f);
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(std::move(b));
  }
  check_model(model);
  return model;
}

void save_curve_csv(std::span<const TrainCurvePoint> curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write training curve: " + path.string());
  out << "epoch,train_loss,val_loss\n";
  for (const TrainCurvePoint& p : curve) {
    out << p.epoch << ',' << fmt_double(p.train_loss) << ',' << fmt_double(p.val_loss) << '\n';
  }
}

std::unique_ptr<scorers::Scorer> make_activation_scorer(ProbeModel model) {
  check_model(model);
  return std::make_unique<ActivationScorer>(std::move(model));
}

}  // namespace stepguard::probe
