#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace spinlm {

// Deterministic random source. std::mt19937_64 output is fully specified by
// the standard; the distributions below are hand-rolled because the standard
// library's distribution objects are implementation-defined and would break
// the bit-reproducibility contract across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  // Uniform in [0, 1), 53-bit mantissa.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  // Box-Muller; consumes two uniforms per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace spinlm
