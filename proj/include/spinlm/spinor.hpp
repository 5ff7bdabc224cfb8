#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "spinlm/errors.hpp"
#include "spinlm/multivector.hpp"

namespace spinlm {

namespace detail {

constexpr double kUnitTol = 1e-6;

// A plane is usable for rotor construction when its square is a scalar of
// magnitude 1: negative square gives a circular rotation, positive square a
// hyperbolic one (possible in mixed signatures).
inline void require_unit_plane(const Multivector& plane) {
  if (!is_grade(plane, 2)) throw ArgumentError("rotor plane must be a homogeneous bivector");
  const Multivector sq = geometric_product(plane, plane);
  const double s = scalar_part(sq);
  double non_scalar = 0.0;
  for (std::size_t i = 1; i < sq.size(); ++i) non_scalar = std::max(non_scalar, std::abs(sq[i]));
  if (non_scalar > 1e-9 * std::max(1.0, std::abs(s)))
    throw ArgumentError("rotor plane must be simple (its square must be a scalar)");
  if (std::abs(std::abs(s) - 1.0) > kUnitTol)
    throw ArgumentError("rotor plane must be unit (|plane*plane| = 1)");
}

inline void require_unit_rotor(const Multivector& r) {
  if (!is_even(r)) throw ArgumentError("rotor must lie in the even subalgebra");
  if (std::abs(norm_squared(r) - 1.0) > kUnitTol)
    throw ArgumentError("rotor must be unit (reverse(R)*R = 1)");
}

inline void require_unit_axis(const Multivector& axis) {
  if (!is_grade(axis, 1)) throw ArgumentError("reflection axis must be a homogeneous vector");
  if (std::abs(norm_squared(axis) - 1.0) > kUnitTol)
    throw ArgumentError("reflection axis must be unit (axis*axis = 1)");
}

}  // namespace detail

/// R = exp(-(theta/2) plane) for a unit simple plane. Covers the circular
/// case (plane squares to -1) and the hyperbolic one (squares to +1).
inline Multivector make_rotor(const Multivector& plane, double theta) {
  detail::require_unit_plane(plane);
  return exp_bivector(plane * (-theta / 2.0));
}

/// Principal logarithm of a scalar-plus-bivector rotor with a circular
/// generator: returns B with exp_bivector(B) = r. Defined away from r = -1;
/// rotors with grade-4 content or hyperbolic generators are rejected.
inline Multivector rotor_log(const Multivector& r) {
  const Multivector b = grade_project(r, 2);
  const Multivector rest = r - Multivector::scalar(r.algebra(), scalar_part(r)) - b;
  if (max_abs_coeff(rest) > 1e-9)
    throw ArgumentError("rotor_log handles scalar-plus-bivector rotors only");
  const double s = scalar_part(r);
  const double bb = scalar_part(geometric_product(b, b));
  if (bb > 1e-12) throw ArgumentError("rotor_log handles circular generators only");
  const double mag = std::sqrt(std::max(0.0, -bb));
  if (mag < 1e-12) {
    if (s < 0.0) throw NumericError("rotor_log is singular at -1");
    return b;
  }
  return b * (std::atan2(mag, s) / mag);
}

/// Two-sided rotor action R v reverse(R). Preserves grade and norm.
inline Multivector sandwich(const Multivector& r, const Multivector& v) {
  detail::require_unit_rotor(r);
  r.require_same(v);
  return geometric_product(geometric_product(r, v), reverse(r));
}

/// Reflection by a unit axis: v -> -a v a on vectors (mirror across the
/// hyperplane orthogonal to a), psi -> a psi a on even elements. Both are
/// involutions.
inline Multivector reflect(const Multivector& axis, const Multivector& v) {
  detail::require_unit_axis(axis);
  axis.require_same(v);
  const Multivector ava = geometric_product(geometric_product(axis, v), axis);
  if (is_grade(v, 1)) return -ava;
  if (is_even(v)) return ava;
  throw ArgumentError("reflect expects a grade-1 vector or an even element");
}

/// One-sided spinor action R psi. Unlike the two-sided action this has
/// period 4*pi in the rotation angle: a 2*pi rotor multiplies psi by -1.
inline Multivector apply_one_sided(const Multivector& r, const Multivector& psi) {
  return geometric_product(r, psi);
}

/// Named word transformation: a smooth rotation in a plane or an abrupt
/// reflection through an axis. Factories normalize the carrier element.
struct TransformSpec {
  enum class Kind { rotation, reflection };

  Kind kind;
  Multivector element;
  double angle;

  static TransformSpec rotation(const Multivector& plane, double theta) {
    if (!is_grade(plane, 2))
      throw ArgumentError("rotation plane must be a homogeneous bivector");
    const Multivector sq = geometric_product(plane, plane);
    const double s = scalar_part(sq);
    double non_scalar = 0.0;
    for (std::size_t i = 1; i < sq.size(); ++i) non_scalar = std::max(non_scalar, std::abs(sq[i]));
    if (non_scalar > 1e-9 * std::max(1.0, std::abs(s)))
      throw ArgumentError("rotation plane must be simple (its square must be a scalar)");
    if (!(s < 0.0))
      throw ArgumentError("rotation plane must square to a negative scalar");
    return TransformSpec{Kind::rotation, plane * (1.0 / std::sqrt(-s)), theta};
  }

  static TransformSpec reflection(const Multivector& axis) {
    if (!is_grade(axis, 1))
      throw ArgumentError("reflection axis must be a homogeneous vector");
    const double q = norm_squared(axis);
    if (!(q > 0.0))
      throw ArgumentError("reflection axis must have positive square");
    return TransformSpec{Kind::reflection, axis * (1.0 / std::sqrt(q)), 0.0};
  }

  Multivector versor() const {
    return kind == Kind::rotation ? make_rotor(element, angle) : element;
  }
};

/// Apply a single transform: rotations act two-sided on grade-1 probes and
/// one-sided on even spinors, reflections act by conjugation.
inline Multivector apply_transform(const TransformSpec& t, const Multivector& x) {
  if (t.kind == TransformSpec::Kind::reflection) return reflect(t.element, x);
  const Multivector r = make_rotor(t.element, t.angle);
  return is_grade(x, 1) ? sandwich(r, x) : apply_one_sided(r, x);
}

/// Product of the versors of a transform sequence. The rightmost transform
/// applies first, so compose({A, B}) acting on psi gives versor(A) *
/// (versor(B) * psi). An even number of reflections yields an even versor.
inline Multivector compose(const std::vector<TransformSpec>& transforms) {
  if (transforms.empty()) throw ArgumentError("compose requires at least one transform");
  Multivector out = transforms.front().versor();
  for (std::size_t i = 1; i < transforms.size(); ++i)
    out = geometric_product(out, transforms[i].versor());
  return out;
}

/// Commuting rotation planes with a geometric frequency ladder; plane k
/// turns at base_frequency * frequency_decay^k radians per position step.
struct PositionalConfig {
  std::vector<Multivector> planes;
  double base_frequency = 1.0;
  double frequency_decay = 0.1;

  void validate() const {
    if (!(base_frequency > 0.0)) throw ValidationError("base_frequency must be positive");
    if (!(frequency_decay > 0.0) || frequency_decay > 1.0)
      throw ValidationError("frequency_decay must lie in (0, 1]");
    for (const Multivector& p : planes) {
      try {
        detail::require_unit_plane(p);
      } catch (const ArgumentError& e) {
        throw ValidationError(std::string("positional plane: ") + e.what());
      }
    }
    for (std::size_t i = 0; i < planes.size(); ++i) {
      for (std::size_t j = i + 1; j < planes.size(); ++j) {
        const Multivector ab = geometric_product(planes[i], planes[j]);
        const Multivector ba = geometric_product(planes[j], planes[i]);
        if (max_abs_coeff(ab - ba) > 1e-12)
          throw ValidationError("positional planes must pairwise commute");
      }
    }
  }
};

/// Default plane set for a signature: disjoint index pairs drawn within the
/// positive block and within the negative block, so every plane squares to
/// -1 and all planes commute. Cl(1,1) style signatures get no plane at all
/// and the positional rotor degenerates to 1.
inline PositionalConfig default_positional_config(const Algebra& alg) {
  PositionalConfig cfg;
  auto pair_range = [&](int lo, int hi) {
    for (int i = lo; i + 1 <= hi; i += 2) {
      Multivector plane(alg);
      plane[(BladeMask{1} << (i - 1)) | (BladeMask{1} << i)] = 1.0;
      cfg.planes.push_back(plane);
    }
  };
  pair_range(1, alg.p());
  pair_range(alg.p() + 1, alg.dims());
  return cfg;
}

/// R_p: product over planes of a rotor turning p * frequency_k radians.
/// R_0 = 1 and, because the planes commute, R_{p+1} = R_1 R_p.
inline Multivector positional_rotor(int p, const PositionalConfig& cfg, const Algebra& alg) {
  if (p < 0) throw ArgumentError("position must be nonnegative");
  Multivector r = Multivector::scalar(alg, 1.0);
  double freq = cfg.base_frequency;
  for (const Multivector& plane : cfg.planes) {
    r = geometric_product(r, make_rotor(plane, p * freq));
    freq *= cfg.frequency_decay;
  }
  return r;
}

/// Position-stamped embedding R_p psi, one-sided. Norm is preserved.
inline Multivector apply_position(const Multivector& r_p, const Multivector& psi) {
  return geometric_product(r_p, psi);
}

/// Phrase composition by left-to-right geometric product of the word
/// spinors. Even inputs give an even result.
inline Multivector phrase_embedding(const std::vector<Multivector>& spinors) {
  if (spinors.empty()) throw ArgumentError("phrase_embedding requires at least one spinor");
  Multivector out = spinors.front();
  for (std::size_t i = 1; i < spinors.size(); ++i) out = geometric_product(out, spinors[i]);
  return out;
}

struct ScoredToken {
  std::size_t index;
  double score;
};

/// Normalized similarity: scalar part of reverse(a)*b over the geometric
/// mean of the two squared norms. Lies in [-1, 1] in Euclidean signatures.
inline double similarity(const Multivector& a, const Multivector& b) {
  const double denom = norm_squared(a) * norm_squared(b);
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw NumericError("similarity undefined for null-norm elements");
  return scalar_part(geometric_product(reverse(a), b)) / std::sqrt(denom);
}

/// Analogy query: move the source spinor with the rotor, then rank the
/// vocabulary by similarity to the result. Ties break toward the lower
/// token index.
inline std::vector<ScoredToken> analogy_apply(const Multivector& r, const Multivector& psi_source,
                                              const std::vector<Multivector>& vocab_spinors) {
  detail::require_unit_rotor(r);
  if (vocab_spinors.empty()) throw ArgumentError("analogy_apply requires a nonempty vocabulary");
  const Multivector moved = apply_one_sided(r, psi_source);
  std::vector<ScoredToken> ranked;
  ranked.reserve(vocab_spinors.size());
  for (std::size_t i = 0; i < vocab_spinors.size(); ++i)
    ranked.push_back({i, similarity(moved, vocab_spinors[i])});
  std::stable_sort(ranked.begin(), ranked.end(), [](const ScoredToken& x, const ScoredToken& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.index < y.index;
  });
  return ranked;
}

}  // namespace spinlm
