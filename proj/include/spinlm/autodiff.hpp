#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "spinlm/errors.hpp"
#include "spinlm/multivector.hpp"

namespace spinlm {

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid only for the
/// tape that created it.
struct Var {
  const Tape* tape = nullptr;
  std::size_t id = 0;
};

/// Per-node gradients produced by a backward pass. Indexed by Var; for leaf
/// nodes the entry is d(loss)/d(coefficient) for every blade coefficient.
class Gradients {
 public:
  const Multivector& at(Var v) const {
    if (v.tape != tape_) throw ArgumentError("gradient lookup for a variable from another tape");
    if (v.id >= grads_.size()) throw ArgumentError("gradient lookup past the end of the tape");
    return grads_[v.id];
  }

 private:
  friend class Tape;
  Gradients(const Tape* tape, std::vector<Multivector> grads)
      : tape_(tape), grads_(std::move(grads)) {}

  const Tape* tape_;
  std::vector<Multivector> grads_;
};

/// Append-only record of a multivector computation. Forward values are
/// computed eagerly and cached; backward() replays the record in reverse,
/// accumulating adjoints, and leaves the tape untouched. Single-writer:
/// record on one thread at a time.
class Tape {
  enum class OpKind {
    kLeaf,
    kCombine,
    kProduct,
    kReverse,
    kGradeProject,
    kCwiseMul,
    kCwiseTanh,
    kScalarExp,
    kScalarLog,
    kScalarRecip,
    kCoeffSum,
    kCoeffSumSq,
  };

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    std::vector<double> weights;
    int grade = 0;
    Multivector value;
  };

 public:
  explicit Tape(const Algebra& alg) : alg_(alg) {}

  const Algebra& algebra() const { return alg_; }
  std::size_t node_count() const { return nodes_.size(); }

  const Multivector& value(Var v) const { return nodes_[check(v)].value; }

  Var leaf(const Multivector& v) {
    if (v.algebra() != alg_) throw ArgumentError("leaf value signature does not match the tape");
    return push({OpKind::kLeaf, {}, {}, 0, v});
  }

  Var constant(double s) { return leaf(Multivector::scalar(alg_, s)); }

  /// Fixed-weight linear combination. The weights are constants, so the
  /// adjoint is the same combination applied to the upstream gradient.
  Var combine(const std::vector<std::pair<double, Var>>& terms) {
    if (terms.empty()) throw ArgumentError("combine requires at least one term");
    Node node{OpKind::kCombine, {}, {}, 0, Multivector(alg_)};
    for (const auto& [w, v] : terms) {
      node.inputs.push_back(check(v));
      node.weights.push_back(w);
      const Multivector& x = nodes_[node.inputs.back()].value;
      for (std::size_t c = 0; c < x.size(); ++c) node.value[c] += w * x[c];
    }
    return push(std::move(node));
  }

  Var add(Var a, Var b) { return combine({{1.0, a}, {1.0, b}}); }
  Var sub(Var a, Var b) { return combine({{1.0, a}, {-1.0, b}}); }
  Var scale(Var a, double s) { return combine({{s, a}}); }

  Var product(Var a, Var b) {
    const std::size_t ia = check(a), ib = check(b);
    return push({OpKind::kProduct,
                 {ia, ib},
                 {},
                 0,
                 geometric_product(nodes_[ia].value, nodes_[ib].value)});
  }

  Var rev(Var a) {
    const std::size_t ia = check(a);
    return push({OpKind::kReverse, {ia}, {}, 0, reverse(nodes_[ia].value)});
  }

  Var project(Var a, int k) {
    const std::size_t ia = check(a);
    return push({OpKind::kGradeProject, {ia}, {}, k, grade_project(nodes_[ia].value, k)});
  }

  Var cwise_mul(Var a, Var b) {
    const std::size_t ia = check(a), ib = check(b);
    Multivector out(alg_);
    const Multivector& x = nodes_[ia].value;
    const Multivector& y = nodes_[ib].value;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = x[c] * y[c];
    return push({OpKind::kCwiseMul, {ia, ib}, {}, 0, std::move(out)});
  }

  Var cwise_tanh(Var a) {
    const std::size_t ia = check(a);
    Multivector out(alg_);
    const Multivector& x = nodes_[ia].value;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = std::tanh(x[c]);
    return push({OpKind::kCwiseTanh, {ia}, {}, 0, std::move(out)});
  }

  Var scalar_exp(Var a) {
    const std::size_t ia = check(a);
    const Multivector& x = nodes_[ia].value;
    if (!is_grade(x, 0)) throw ArgumentError("scalar_exp requires a scalar-valued node");
    const double e = std::exp(x[0]);
    if (!std::isfinite(e)) throw NumericError("scalar_exp overflowed");
    return push({OpKind::kScalarExp, {ia}, {}, 0, Multivector::scalar(alg_, e)});
  }

  Var scalar_log(Var a) {
    const std::size_t ia = check(a);
    const Multivector& x = nodes_[ia].value;
    if (!is_grade(x, 0)) throw ArgumentError("scalar_log requires a scalar-valued node");
    if (!(x[0] > 0.0)) throw NumericError("scalar_log requires a positive argument");
    return push({OpKind::kScalarLog, {ia}, {}, 0, Multivector::scalar(alg_, std::log(x[0]))});
  }

  Var scalar_recip(Var a) {
    const std::size_t ia = check(a);
    const Multivector& x = nodes_[ia].value;
    if (!is_grade(x, 0)) throw ArgumentError("scalar_recip requires a scalar-valued node");
    if (x[0] == 0.0) throw NumericError("scalar_recip of zero");
    return push({OpKind::kScalarRecip, {ia}, {}, 0, Multivector::scalar(alg_, 1.0 / x[0])});
  }

  Var coeff_sum(Var a) {
    const std::size_t ia = check(a);
    double s = 0.0;
    const Multivector& x = nodes_[ia].value;
    for (std::size_t c = 0; c < x.size(); ++c) s += x[c];
    return push({OpKind::kCoeffSum, {ia}, {}, 0, Multivector::scalar(alg_, s)});
  }

  Var coeff_sumsq(Var a) {
    const std::size_t ia = check(a);
    double s = 0.0;
    const Multivector& x = nodes_[ia].value;
    for (std::size_t c = 0; c < x.size(); ++c) s += x[c] * x[c];
    return push({OpKind::kCoeffSumSq, {ia}, {}, 0, Multivector::scalar(alg_, s)});
  }

  // --- composite helpers (recorded as graphs of the primitives above) ----

  Var dirac_scalar(Var psi, Var phi) { return project(product(rev(psi), phi), 0); }

  /// Exponential as a recorded scaling-and-squaring series, so the gradient
  /// flows through the actual arithmetic. Matches detail::exp_series term
  /// for term, including the halving rule. The closed circular/hyperbolic
  /// forms are never recorded.
  Var exp_series(Var x) {
    int halvings = 0;
    double cap = max_abs_coeff(value(x));
    while (cap > 0.5 && halvings < 64) {
      cap *= 0.5;
      ++halvings;
    }
    Var scaled = scale(x, std::ldexp(1.0, -halvings));
    Var acc = constant(1.0);
    Var power = acc;
    double factorial = 1.0;
    for (int k = 1; k < 16; ++k) {
      power = product(power, scaled);
      factorial *= k;
      acc = combine({{1.0, acc}, {1.0 / factorial, power}});
    }
    for (int k = 0; k < halvings; ++k) acc = product(acc, acc);
    return acc;
  }

  /// Numerically stable softmax over scalar nodes. The subtracted maximum
  /// enters as a constant, which leaves the gradient unchanged (softmax is
  /// shift invariant).
  std::vector<Var> softmax(const std::vector<Var>& scores) {
    if (scores.empty()) throw ArgumentError("softmax requires at least one score");
    double m = -std::numeric_limits<double>::infinity();
    for (Var s : scores) {
      const Multivector& v = value(s);
      if (!is_grade(v, 0)) throw ArgumentError("softmax inputs must be scalar-valued nodes");
      if (!std::isfinite(v[0])) throw NumericError("softmax received a non-finite score");
      m = std::max(m, v[0]);
    }
    Var shift = constant(m);
    std::vector<Var> exps;
    std::vector<std::pair<double, Var>> total;
    exps.reserve(scores.size());
    for (Var s : scores) {
      exps.push_back(scalar_exp(sub(s, shift)));
      total.push_back({1.0, exps.back()});
    }
    Var inv_total = scalar_recip(combine(total));
    std::vector<Var> out;
    out.reserve(exps.size());
    for (Var e : exps) out.push_back(cwise_mul(e, inv_total));
    return out;
  }

  /// Reverse sweep from a scalar loss. Returns the gradient of the loss
  /// with respect to every node's coefficients; the tape itself is not
  /// modified, so repeated calls give identical results.
  Gradients backward(Var loss) const {
    const std::size_t lid = check(loss);
    if (!is_grade(nodes_[lid].value, 0))
      throw ArgumentError("backward requires a scalar-valued loss node");
    const std::size_t dim = alg_.blade_count();
    std::vector<Multivector> g(nodes_.size(), Multivector(alg_));
    g[lid][0] = 1.0;
    for (std::size_t id = lid + 1; id-- > 0;) {
      const Node& node = nodes_[id];
      const Multivector& gbar = g[id];
      switch (node.kind) {
        case OpKind::kLeaf:
          break;
        case OpKind::kCombine:
          for (std::size_t t = 0; t < node.inputs.size(); ++t) {
            Multivector& gi = g[node.inputs[t]];
            const double w = node.weights[t];
            for (std::size_t c = 0; c < dim; ++c) gi[c] += w * gbar[c];
          }
          break;
        case OpKind::kProduct: {
          const Multivector& a = nodes_[node.inputs[0]].value;
          const Multivector& b = nodes_[node.inputs[1]].value;
          Multivector& ga = g[node.inputs[0]];
          Multivector& gb = g[node.inputs[1]];
          for (std::size_t i = 0; i < dim; ++i) {
            const double ai = a[i];
            for (std::size_t j = 0; j < dim; ++j) {
              const double bj = b[j];
              if (ai == 0.0 && bj == 0.0) continue;
              const SignedBlade r =
                  alg_.blade_product(static_cast<BladeMask>(i), static_cast<BladeMask>(j));
              const double gk = gbar[r.blade];
              if (gk == 0.0) continue;
              const double gs = r.sign * gk;
              if (bj != 0.0) ga[i] += gs * bj;
              if (ai != 0.0) gb[j] += gs * ai;
            }
          }
          break;
        }
        case OpKind::kReverse: {
          Multivector& gi = g[node.inputs[0]];
          for (std::size_t c = 0; c < dim; ++c) {
            const int k = grade_of(static_cast<BladeMask>(c));
            const double sgn = ((k * (k - 1) / 2) % 2 != 0) ? -1.0 : 1.0;
            gi[c] += sgn * gbar[c];
          }
          break;
        }
        case OpKind::kGradeProject: {
          Multivector& gi = g[node.inputs[0]];
          for (std::size_t c = 0; c < dim; ++c)
            if (grade_of(static_cast<BladeMask>(c)) == node.grade) gi[c] += gbar[c];
          break;
        }
        case OpKind::kCwiseMul: {
          const Multivector& a = nodes_[node.inputs[0]].value;
          const Multivector& b = nodes_[node.inputs[1]].value;
          Multivector& ga = g[node.inputs[0]];
          Multivector& gb = g[node.inputs[1]];
          for (std::size_t c = 0; c < dim; ++c) {
            ga[c] += gbar[c] * b[c];
            gb[c] += gbar[c] * a[c];
          }
          break;
        }
        case OpKind::kCwiseTanh: {
          Multivector& gi = g[node.inputs[0]];
          for (std::size_t c = 0; c < dim; ++c)
            gi[c] += gbar[c] * (1.0 - node.value[c] * node.value[c]);
          break;
        }
        case OpKind::kScalarExp:
          g[node.inputs[0]][0] += gbar[0] * node.value[0];
          break;
        case OpKind::kScalarLog:
          g[node.inputs[0]][0] += gbar[0] / nodes_[node.inputs[0]].value[0];
          break;
        case OpKind::kScalarRecip:
          g[node.inputs[0]][0] -= gbar[0] * node.value[0] * node.value[0];
          break;
        case OpKind::kCoeffSum: {
          Multivector& gi = g[node.inputs[0]];
          for (std::size_t c = 0; c < dim; ++c) gi[c] += gbar[0];
          break;
        }
        case OpKind::kCoeffSumSq: {
          const Multivector& a = nodes_[node.inputs[0]].value;
          Multivector& gi = g[node.inputs[0]];
          for (std::size_t c = 0; c < dim; ++c) gi[c] += 2.0 * a[c] * gbar[0];
          break;
        }
      }
    }
    return Gradients(this, std::move(g));
  }

 private:
  std::size_t check(Var v) const {
    if (v.tape != this) throw ArgumentError("variable belongs to a different tape");
    if (v.id >= nodes_.size()) throw ArgumentError("variable id past the end of the tape");
    return v.id;
  }

  Var push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
  }

  Algebra alg_;
  std::vector<Node> nodes_;
};

/// Compare the backward pass against central finite differences for a
/// scalar function of multivector leaves. Returns the worst relative error
/// over every coefficient of every leaf.
inline double grad_check(const Algebra& alg,
                         const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                         const std::vector<Multivector>& point, double step = 1e-6) {
  auto eval = [&](const std::vector<Multivector>& at) {
    Tape tape(alg);
    std::vector<Var> leaves;
    leaves.reserve(at.size());
    for (const Multivector& m : at) leaves.push_back(tape.leaf(m));
    const double v = scalar_part(tape.value(build(tape, leaves)));
    if (!std::isfinite(v)) throw NumericError("grad_check evaluated a non-finite loss");
    return v;
  };

  Tape tape(alg);
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Multivector& m : point) leaves.push_back(tape.leaf(m));
  const Gradients grads = tape.backward(build(tape, leaves));

  double worst = 0.0;
  std::vector<Multivector> work = point;
  for (std::size_t l = 0; l < point.size(); ++l) {
    for (std::size_t c = 0; c < point[l].size(); ++c) {
      const double saved = work[l][c];
      work[l][c] = saved + step;
      const double up = eval(work);
      work[l][c] = saved - step;
      const double dn = eval(work);
      work[l][c] = saved;
      const double fd = (up - dn) / (2.0 * step);
      const double ad = grads.at(leaves[l])[c];
      if (!std::isfinite(fd) || !std::isfinite(ad))
        throw NumericError("grad_check hit a non-finite gradient at leaf " + std::to_string(l) +
                           ", blade " + std::to_string(c));
      worst = std::max(worst, std::abs(ad - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace spinlm
