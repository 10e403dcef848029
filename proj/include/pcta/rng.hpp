#pragma once

#include <cstdint>
#include <random>

namespace pcta {

// Seeded RNG wrapper. std::mt19937_64 output is pinned by the standard, and
// all value mappings are done by hand here, so identical seeds give
// bit-identical draws on every platform (std::uniform_real_distribution has
// no such guarantee).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform draw in [0, 1) with 53 bits of entropy.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform draw in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform draw in [-a, a).
  double uniform_pm(double a) { return uniform(-a, a); }

  /// Index in [0, n). n must be positive.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pcta
