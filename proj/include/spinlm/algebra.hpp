#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "spinlm/errors.hpp"

namespace spinlm {

// A basis blade is encoded as a bitmask: bit k set <=> basis vector e_(k+1)
// is a factor. Blade 0 is the scalar unit. Basis vectors inside a blade are
// always in ascending order (e1e3, never e3e1).
using BladeMask = std::uint32_t;

inline int grade_of(BladeMask blade) { return std::popcount(blade); }

struct SignedBlade {
  double sign;  // -1 or +1; Cl(p,q) has no null basis vectors, so never 0
  BladeMask blade;
};

/// The signature (p, q) of the real Clifford algebra Cl(p,q): p basis vectors
/// square to +1 and q square to -1. n = p + q is capped at 12 so the dense
/// coefficient storage (2^n doubles) stays desk-sized.
class Algebra {
 public:
  Algebra(int p, int q) : p_(p), q_(q) {
    if (p < 0 || q < 0) throw ArgumentError("algebra signature requires p >= 0 and q >= 0");
    int n = p + q;
    if (n < 1 || n > 12)
      throw ArgumentError("algebra dimension p+q must be in [1, 12], got " + std::to_string(n));
  }

  int p() const { return p_; }
  int q() const { return q_; }
  int dims() const { return p_ + q_; }
  std::size_t blade_count() const { return std::size_t{1} << dims(); }

  bool operator==(const Algebra& other) const { return p_ == other.p_ && q_ == other.q_; }
  bool operator!=(const Algebra& other) const { return !(*this == other); }

  // +1 if the 0-based basis index squares to +1, else -1.
  int metric_sign(int index0) const {
    if (index0 < 0 || index0 >= dims())
      throw ArgumentError("basis index " + std::to_string(index0) + " out of range for " +
                          name());
    return index0 < p_ ? +1 : -1;
  }

  /// Product of two basis blades: the result blade is a XOR b; the sign is
  /// (-1)^(transpositions needed to interleave the sorted factor lists)
  /// times the metric sign of every contracted index.
  SignedBlade blade_product(BladeMask a, BladeMask b) const {
    if (a >= blade_count() || b >= blade_count())
      throw ArgumentError("blade bitmask out of range for Cl(" + std::to_string(p_) + "," +
                          std::to_string(q_) + ")");
    // Transposition count: for each factor of b, the number of factors of a
    // with a strictly higher index that it must slide past.
    int swaps = 0;
    for (BladeMask t = a >> 1; t != 0; t >>= 1) swaps += std::popcount(t & b);
    double sign = (swaps & 1) ? -1.0 : 1.0;
    for (BladeMask common = a & b; common != 0; common &= common - 1) {
      if (std::countr_zero(common) >= p_) sign = -sign;
    }
    return {sign, a ^ b};
  }

  /// Blade name for display: "1" for the scalar, else "e" followed by the
  /// 1-based factor indices ("e13" is e1e3). Unambiguous for n <= 9.
  std::string blade_name(BladeMask blade) const {
    if (blade >= blade_count())
      throw ArgumentError("blade mask " + std::to_string(blade) + " out of range for " + name());
    if (blade == 0) return "1";
    std::string name = "e";
    for (int k = 0; k < dims(); ++k)
      if (blade & (BladeMask{1} << k)) name += std::to_string(k + 1);
    return name;
  }

  /// All blade bitmasks in canonical order: sorted by grade, then by
  /// ascending bitmask value. This order is frozen for rendering and
  /// serialization; coefficient storage itself is indexed by bitmask.
  std::vector<BladeMask> canonical_blades() const {
    std::vector<BladeMask> blades(blade_count());
    for (std::size_t i = 0; i < blades.size(); ++i) blades[i] = static_cast<BladeMask>(i);
    std::stable_sort(blades.begin(), blades.end(), [](BladeMask a, BladeMask b) {
      if (grade_of(a) != grade_of(b)) return grade_of(a) < grade_of(b);
      return a < b;
    });
    return blades;
  }

  /// Grade-2 blades in canonical order (e12, e13, e23, e14, ...). This is
  /// the coordinate order used for bivector parameter arrays everywhere.
  std::vector<BladeMask> bivector_blades() const { return blades_of_grade(2); }

  /// Even-grade blades in canonical order; the even subalgebra has
  /// dimension 2^(n-1).
  std::vector<BladeMask> even_blades() const {
    std::vector<BladeMask> out;
    for (BladeMask b : canonical_blades())
      if (grade_of(b) % 2 == 0) out.push_back(b);
    return out;
  }

  std::vector<BladeMask> blades_of_grade(int k) const {
    std::vector<BladeMask> out;
    for (BladeMask b : canonical_blades())
      if (grade_of(b) == k) out.push_back(b);
    return out;
  }

  std::size_t bivector_count() const {
    int n = dims();
    return static_cast<std::size_t>(n * (n - 1) / 2);
  }

  std::size_t even_count() const { return blade_count() / 2; }

  std::string name() const { return "Cl(" + std::to_string(p_) + "," + std::to_string(q_) + ")"; }

 private:
  int p_;
  int q_;
};

}  // namespace spinlm
