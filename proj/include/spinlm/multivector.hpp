#pragma once

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spinlm/algebra.hpp"
#include "spinlm/errors.hpp"

namespace spinlm {

/// Dense element of Cl(p,q): one double per basis blade, indexed by the
/// blade's bitmask. Covers grades 0 through n.
class Multivector {
 public:
  explicit Multivector(const Algebra& alg) : alg_(alg), c_(alg.blade_count(), 0.0) {}

  static Multivector scalar(const Algebra& alg, double value) {
    Multivector m(alg);
    m.c_[0] = value;
    return m;
  }

  /// Basis vector e_i, 1-based index.
  static Multivector basis_vector(const Algebra& alg, int i) {
    if (i < 1 || i > alg.dims())
      throw ArgumentError("basis vector index must be in [1, " + std::to_string(alg.dims()) + "]");
    Multivector m(alg);
    m.c_[BladeMask{1} << (i - 1)] = 1.0;
    return m;
  }

  static Multivector basis_blade(const Algebra& alg, BladeMask blade, double coeff = 1.0) {
    if (blade >= alg.blade_count()) throw ArgumentError("blade bitmask out of range");
    Multivector m(alg);
    m.c_[blade] = coeff;
    return m;
  }

  static Multivector from_coeffs(const Algebra& alg, std::vector<double> coeffs) {
    if (coeffs.size() != alg.blade_count())
      throw ArgumentError("coefficient count " + std::to_string(coeffs.size()) +
                          " does not match blade count " + std::to_string(alg.blade_count()));
    for (double c : coeffs)
      if (!std::isfinite(c)) throw ArgumentError("multivector coefficients must be finite");
    Multivector m(alg);
    m.c_ = std::move(coeffs);
    return m;
  }

  const Algebra& algebra() const { return alg_; }
  std::size_t size() const { return c_.size(); }
  const std::vector<double>& coeffs() const { return c_; }

  double operator[](std::size_t blade) const { return c_[blade]; }
  double& operator[](std::size_t blade) { return c_[blade]; }

  Multivector& operator+=(const Multivector& o) {
    require_same(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Multivector& operator-=(const Multivector& o) {
    require_same(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Multivector& operator*=(double s) {
    for (double& c : c_) c *= s;
    return *this;
  }

  void require_same(const Multivector& o) const {
    if (alg_ != o.alg_) throw ArgumentError("algebra signature mismatch between operands");
  }

 private:
  Algebra alg_;
  std::vector<double> c_;
};

inline Multivector operator+(Multivector a, const Multivector& b) { return a += b; }
inline Multivector operator-(Multivector a, const Multivector& b) { return a -= b; }
inline Multivector operator*(Multivector a, double s) { return a *= s; }
inline Multivector operator*(double s, Multivector a) { return a *= s; }
inline Multivector operator-(Multivector a) { return a *= -1.0; }

/// Full geometric product: bilinear expansion over every blade pair through
/// Algebra::blade_product. Dense cost is O(4^n) blade pairs (zero
/// coefficients are skipped).
inline Multivector geometric_product(const Multivector& a, const Multivector& b) {
  a.require_same(b);
  const Algebra& alg = a.algebra();
  const std::size_t dim = alg.blade_count();
  Multivector out(alg);
  for (std::size_t i = 0; i < dim; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    for (std::size_t j = 0; j < dim; ++j) {
      const double bj = b[j];
      if (bj == 0.0) continue;
      const SignedBlade r = alg.blade_product(static_cast<BladeMask>(i), static_cast<BladeMask>(j));
      out[r.blade] += r.sign * ai * bj;
    }
  }
  return out;
}

inline Multivector operator*(const Multivector& a, const Multivector& b) {
  return geometric_product(a, b);
}

/// Outer (wedge) product: the grade-(r+s) part of the product of homogeneous
/// factors, extended bilinearly. A blade pair contributes iff the factors
/// share no basis vector.
inline Multivector outer_product(const Multivector& a, const Multivector& b) {
  a.require_same(b);
  const Algebra& alg = a.algebra();
  const std::size_t dim = alg.blade_count();
  Multivector out(alg);
  for (std::size_t i = 0; i < dim; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    for (std::size_t j = 0; j < dim; ++j) {
      const double bj = b[j];
      if (bj == 0.0 || (i & j) != 0) continue;
      const SignedBlade r = alg.blade_product(static_cast<BladeMask>(i), static_cast<BladeMask>(j));
      out[r.blade] += r.sign * ai * bj;
    }
  }
  return out;
}

/// Inner product as the left contraction: for homogeneous grades r, s this is
/// the grade-(s-r) part of the geometric product (zero when r > s), extended
/// bilinearly.
inline Multivector inner_product(const Multivector& a, const Multivector& b) {
  a.require_same(b);
  const Algebra& alg = a.algebra();
  const std::size_t dim = alg.blade_count();
  Multivector out(alg);
  for (std::size_t i = 0; i < dim; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    for (std::size_t j = 0; j < dim; ++j) {
      const double bj = b[j];
      if (bj == 0.0) continue;
      const int gi = grade_of(static_cast<BladeMask>(i));
      const int gj = grade_of(static_cast<BladeMask>(j));
      const BladeMask blade = static_cast<BladeMask>(i ^ j);
      if (grade_of(blade) != gj - gi) continue;
      const SignedBlade r = alg.blade_product(static_cast<BladeMask>(i), static_cast<BladeMask>(j));
      out[r.blade] += r.sign * ai * bj;
    }
  }
  return out;
}

/// Reversion: flips the factor order of every blade, so a grade-k
/// coefficient picks up the sign (-1)^(k(k-1)/2).
inline Multivector reverse(const Multivector& a) {
  Multivector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int k = grade_of(static_cast<BladeMask>(i));
    if ((k * (k - 1) / 2) % 2 != 0) out[i] = -out[i];
  }
  return out;
}

inline Multivector grade_project(const Multivector& a, int k) {
  if (k < 0 || k > a.algebra().dims())
    throw ArgumentError("grade must be in [0, " + std::to_string(a.algebra().dims()) + "]");
  Multivector out(a.algebra());
  for (std::size_t i = 0; i < a.size(); ++i)
    if (grade_of(static_cast<BladeMask>(i)) == k) out[i] = a[i];
  return out;
}

inline double scalar_part(const Multivector& a) { return a[0]; }

inline Multivector linear_combine(const std::vector<std::pair<double, Multivector>>& terms) {
  if (terms.empty()) throw ArgumentError("linear_combine requires at least one term");
  Multivector out(terms.front().second.algebra());
  for (const auto& [w, m] : terms) {
    out.require_same(m);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * m[i];
  }
  return out;
}

/// Squared norm <A~ A>_0. Equals the plain sum of squared coefficients in
/// Euclidean signatures (q = 0); may be negative in mixed signatures.
inline double norm_squared(const Multivector& a) {
  return scalar_part(geometric_product(reverse(a), a));
}

inline bool is_grade(const Multivector& a, int k) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != 0.0 && grade_of(static_cast<BladeMask>(i)) != k) return false;
  return true;
}

inline bool is_even(const Multivector& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != 0.0 && grade_of(static_cast<BladeMask>(i)) % 2 != 0) return false;
  return true;
}

inline double max_abs_coeff(const Multivector& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
  return m;
}

namespace detail {

// Truncated exponential series with scaling and squaring: halve until the
// largest coefficient is <= 0.5, sum 16 series terms, square back. Valid for
// any multivector; used as the exp fallback and mirrored by the autodiff
// series graph.
inline Multivector exp_series(const Multivector& x) {
  int halvings = 0;
  double scale = max_abs_coeff(x);
  while (scale > 0.5 && halvings < 64) {
    scale *= 0.5;
    ++halvings;
  }
  Multivector scaled = x * std::ldexp(1.0, -halvings);
  Multivector acc = Multivector::scalar(x.algebra(), 1.0);
  Multivector power = Multivector::scalar(x.algebra(), 1.0);
  double factorial = 1.0;
  for (int k = 1; k < 16; ++k) {
    power = geometric_product(power, scaled);
    factorial *= k;
    acc += power * (1.0 / factorial);
  }
  for (int k = 0; k < halvings; ++k) acc = geometric_product(acc, acc);
  return acc;
}

}  // namespace detail

/// Exponential of a bivector. Simple bivectors (B*B scalar) use the closed
/// forms: cos/sin when B*B < 0 (circular), cosh/sinh when B*B > 0
/// (hyperbolic). Near-null squares and non-simple bivectors (possible for
/// n >= 4) fall back to the scaling-and-squaring series. Result is even.
inline Multivector exp_bivector(const Multivector& b) {
  if (!is_grade(b, 2)) throw ArgumentError("exp_bivector requires a homogeneous grade-2 argument");
  constexpr double kEps = 1e-12;
  const Multivector sq = geometric_product(b, b);
  const double s = scalar_part(sq);
  double non_scalar = 0.0;
  for (std::size_t i = 1; i < sq.size(); ++i) non_scalar = std::max(non_scalar, std::abs(sq[i]));
  if (non_scalar > kEps || std::abs(s) <= kEps) return detail::exp_series(b);
  if (s < 0.0) {
    const double r = std::sqrt(-s);
    return Multivector::scalar(b.algebra(), std::cos(r)) + b * (std::sin(r) / r);
  }
  const double r = std::sqrt(s);
  return Multivector::scalar(b.algebra(), std::cosh(r)) + b * (std::sinh(r) / r);
}

// --- bivector / even-subalgebra coordinate views -------------------------
//
// Parameter arrays use the canonical bivector order (e12, e13, e23, e14, ...)
// and, for feed-forward weights, the canonical even-blade order.

inline Multivector bivector_from_coords(const Algebra& alg, std::span<const double> coords) {
  const auto blades = alg.bivector_blades();
  if (coords.size() != blades.size())
    throw ArgumentError("bivector coordinate array must have length " +
                        std::to_string(blades.size()));
  Multivector out(alg);
  for (std::size_t k = 0; k < blades.size(); ++k) {
    if (!std::isfinite(coords[k])) throw ArgumentError("bivector coordinates must be finite");
    out[blades[k]] = coords[k];
  }
  return out;
}

inline std::vector<double> bivector_coords(const Multivector& m) {
  const auto blades = m.algebra().bivector_blades();
  std::vector<double> out(blades.size());
  for (std::size_t k = 0; k < blades.size(); ++k) out[k] = m[blades[k]];
  return out;
}

inline Multivector even_from_coords(const Algebra& alg, std::span<const double> coords) {
  const auto blades = alg.even_blades();
  if (coords.size() != blades.size())
    throw ArgumentError("even coordinate array must have length " + std::to_string(blades.size()));
  Multivector out(alg);
  for (std::size_t k = 0; k < blades.size(); ++k) out[blades[k]] = coords[k];
  return out;
}

inline std::vector<double> even_coords(const Multivector& m) {
  const auto blades = m.algebra().even_blades();
  std::vector<double> out(blades.size());
  for (std::size_t k = 0; k < blades.size(); ++k) out[k] = m[blades[k]];
  return out;
}

/// Render as e.g. "0.5 + 2 e12 - 1 e13" with terms in canonical blade order.
inline std::string to_string(const Multivector& m, const char* fmt = "%.12g") {
  std::string out;
  char buf[64];
  for (BladeMask blade : m.algebra().canonical_blades()) {
    const double c = m[blade];
    if (c == 0.0) continue;
    if (out.empty()) {
      std::snprintf(buf, sizeof buf, fmt, c);
      out += buf;
    } else {
      std::snprintf(buf, sizeof buf, fmt, std::abs(c));
      out += (c < 0.0) ? " - " : " + ";
      out += buf;
    }
    if (blade != 0) {
      out += ' ';
      out += m.algebra().blade_name(blade);
    }
  }
  return out.empty() ? "0" : out;
}

}  // namespace spinlm
