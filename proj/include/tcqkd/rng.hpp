#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace tcqkd {

/// Portable random stream. The engine is std::mt19937_64, whose output is
/// fixed by the standard; all distributions are implemented here so that a
/// given seed yields the same draws with any standard library.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(mix(seed)) {}

  /// Independent stream for (master, id) pairs, e.g. one per sequence.
  static RandomStream derive(std::uint64_t master, std::uint64_t id) {
    return RandomStream(mix(master ^ mix(id + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  double normal();
  double exponential(double rate);
  std::uint64_t poisson(double mean);
  std::uint64_t binomial(std::uint64_t n, double p);

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

}  // namespace tcqkd
