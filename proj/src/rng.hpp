#pragma once

#include <cstdint>
#include <vector>

namespace stepguard {

// Deterministic random stream (xoshiro256** seeded via splitmix64) with
// self-contained samplers. The standard library distributions are
// implementation-defined, which would break byte-identical reruns across
// toolchains, so everything random in the toolkit goes through this class.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n);

  bool bernoulli(double p);

  // Standard normal via Box-Muller (pairs cached).
  double normal();
  double normal(double mean, double sigma);

  // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
  double gamma(double shape);
  // Beta(a, b) as a gamma ratio; a, b > 0.
  double beta(double a, double b);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent substream seed for (seed, stream) pairs, e.g. sharded
  // generation.
  static uint64_t derive(uint64_t seed, uint64_t stream);

 private:
  uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace stepguard
