#pragma once

/**
 * Seeded splittable PRNG for deterministic, order-independent simulation.
 *
 * Core generator is SplitMix64 (Vigna's mixer). Stream derivation:
 * `derive_seed(base, i)` feeds `base + (i+1) * GOLDEN` through the mix64
 * finalizer, so child streams (row i of a scenario, restart r of a fit,
 * bootstrap replicate b) are independent of the order in which they are
 * consumed. Running the same work in parallel or sequentially yields
 * bit-identical results.
 */

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace multicause {

namespace detail {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Child-stream seed for sub-task `index` of a computation seeded by `base`.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return detail::mix64(base + (index + 1) * detail::kGolden);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += detail::kGolden);
    return detail::mix64(z);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + next_double() * (hi - lo); }

  bool bernoulli(double p) { return next_double() < p; }

  /// One Gaussian draw via Box-Muller; always consumes exactly two uniforms.
  double normal(double mean = 0.0, double sd = 1.0) {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Index in [0, probs.size()) by CDF scan; probs need not be normalized exactly.
  int categorical(std::span<const double> probs) {
    const double u = next_double();
    double acc = 0.0;
    const int last = static_cast<int>(probs.size()) - 1;
    for (int i = 0; i < last; ++i) {
      acc += probs[static_cast<std::size_t>(i)];
      if (u < acc) return i;
    }
    return last;
  }

  /// Uniform integer in [0, n). Negligible bias for n << 2^53.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(next_double() * static_cast<double>(n));
  }

  /// Flat Dirichlet draw: normalized Exp(1) variates.
  std::vector<double> flat_simplex(int k) {
    std::vector<double> v(static_cast<std::size_t>(k));
    double total = 0.0;
    for (auto& x : v) {
      double u = next_double();
      if (u <= 0.0) u = 0x1.0p-53;
      x = -std::log(u);
      total += x;
    }
    for (auto& x : v) x /= total;
    return v;
  }

  Rng child(std::uint64_t index) const { return Rng(derive_seed(state_, index)); }

 private:
  std::uint64_t state_;
};

}  // namespace multicause
