#pragma once

#include <cstdint>
#include <random>

namespace pimm {

/// Deterministic random source. Wraps std::mt19937_64 but derives all
/// variates itself (no std::*_distribution), so the exact stream depends
/// only on the seed, not on the standard library build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for a named purpose. Mixing is splitmix64 so that
  /// (seed, tag) pairs land far apart even for adjacent seeds.
  static Rng derive(std::uint64_t seed, std::uint64_t tag);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n), n > 0. Rejection sampling, unbiased.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one cached spare).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 mixing step, also used for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace pimm
