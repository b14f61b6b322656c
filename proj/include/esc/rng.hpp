#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "esc/errors.hpp"

namespace esc {

// Deterministic random source. The engine is std::mt19937_64 (bit-exact by
// the standard); the distributions are hand-rolled because the std
// distribution classes are implementation-defined and would break
// reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Index in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Standard normal via Box-Muller; draws are generated in pairs.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // Gamma(alpha, 1) via Marsaglia-Tsang squeeze; alpha < 1 handled with the
  // Gamma(alpha+1) * U^(1/alpha) boost.
  double gamma(double alpha) {
    if (alpha <= 0.0) throw ArgumentError("Rng::gamma: alpha must be positive");
    if (alpha < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Beta(alpha, alpha) as g1/(g1+g2) with two Gamma(alpha,1) draws.
  double beta_symmetric(double alpha) {
    const double g1 = gamma(alpha);
    const double g2 = gamma(alpha);
    const double s = g1 + g2;
    if (s <= 0.0) return 0.5;
    return g1 / s;
  }

  // Fisher-Yates over [0, n).
  template <typename Int>
  void shuffle(std::vector<Int>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent stream for a worker task; mixing constants from
  // splitmix64 so nearby task ids do not correlate.
  static std::uint64_t derive_seed(std::uint64_t base, std::uint64_t task) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (task + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace esc
