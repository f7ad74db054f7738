#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace simlab {

/// Deterministic random source. Every random draw in the toolkit flows
/// through an explicitly seeded instance; there is no hidden global state.
/// Gaussians come from Box-Muller over the raw 64-bit stream so sequences
/// do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();  // in [0,1), so 1-u1 is in (0,1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  /// Uniform integer in [0, n).
  int below(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Per-trial seed derivation used when probes fan out over trials.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return base ^ index;
}

}  // namespace simlab
