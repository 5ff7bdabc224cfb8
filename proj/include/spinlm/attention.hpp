#pragma once

#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "spinlm/autodiff.hpp"
#include "spinlm/errors.hpp"
#include "spinlm/multivector.hpp"
#include "spinlm/spinor.hpp"

namespace spinlm {

/// Vocabulary plus one bivector generator per token. The embedding of token
/// w is exp_bivector(B_w), always an even-grade rotor; in a Euclidean
/// signature it is unit-norm.
struct EmbeddingTable {
  Algebra alg;
  std::vector<std::string> vocab;
  std::vector<std::vector<double>> generators;

  std::size_t size() const { return vocab.size(); }

  void validate() const {
    if (vocab.size() != generators.size())
      throw ValidationError("embedding table vocab and generator counts differ");
    std::set<std::string> seen;
    for (const std::string& w : vocab)
      if (!seen.insert(w).second) throw ValidationError("duplicate vocab entry: " + w);
    const std::size_t nb = alg.bivector_count();
    for (const auto& g : generators) {
      if (g.size() != nb)
        throw ValidationError("generator length " + std::to_string(g.size()) +
                              " does not match bivector count " + std::to_string(nb));
      for (double c : g)
        if (!std::isfinite(c)) throw ValidationError("non-finite generator coefficient");
    }
  }

  Multivector spinor(std::size_t id) const {
    if (id >= vocab.size()) throw ArgumentError("token id out of range");
    return exp_bivector(bivector_from_coords(alg, generators[id]));
  }
};

/// Token embeddings stamped with their positional rotor: output at position
/// p is R_p * exp_bivector(B_w).
inline std::vector<Multivector> embed_sequence(const std::vector<int>& ids,
                                               const EmbeddingTable& table,
                                               const PositionalConfig& cfg) {
  std::vector<Multivector> out;
  out.reserve(ids.size());
  for (std::size_t p = 0; p < ids.size(); ++p) {
    if (ids[p] < 0 || static_cast<std::size_t>(ids[p]) >= table.size())
      throw ArgumentError("token id out of range");
    out.push_back(apply_position(positional_rotor(static_cast<int>(p), cfg, table.alg),
                                 table.spinor(static_cast<std::size_t>(ids[p]))));
  }
  return out;
}

/// Dirac inner product reverse(psi) * phi; the scalar form takes its
/// grade-0 part. dirac_scalar(psi, psi) equals norm_squared(psi), and for
/// grade-1 arguments it equals the coefficient dot product.
inline Multivector dirac_inner(const Multivector& psi, const Multivector& phi) {
  return geometric_product(reverse(psi), phi);
}

inline double dirac_scalar(const Multivector& psi, const Multivector& phi) {
  return scalar_part(dirac_inner(psi, phi));
}

/// Max-subtracted softmax; stable for any finite scores.
inline std::vector<double> softmax(const std::vector<double>& scores) {
  if (scores.empty()) throw ArgumentError("softmax requires at least one score");
  double m = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("softmax received a non-finite score");
    m = std::max(m, s);
  }
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - m);
    total += out[i];
  }
  for (double& w : out) w /= total;
  return out;
}

namespace detail {

inline std::vector<Multivector> attend_core(const std::vector<Multivector>& qs,
                                            const std::vector<Multivector>& ks,
                                            const std::vector<Multivector>& vs, double d_s,
                                            bool causal) {
  const double inv = 1.0 / std::sqrt(d_s);
  std::vector<Multivector> out;
  out.reserve(qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const std::size_t jmax = causal ? std::min(i + 1, ks.size()) : ks.size();
    std::vector<double> scores(jmax);
    for (std::size_t j = 0; j < jmax; ++j) scores[j] = dirac_scalar(qs[i], ks[j]) * inv;
    const std::vector<double> w = softmax(scores);
    std::vector<std::pair<double, Multivector>> mix;
    mix.reserve(jmax);
    for (std::size_t j = 0; j < jmax; ++j) mix.push_back({w[j], vs[j]});
    out.push_back(linear_combine(mix));
  }
  return out;
}

}  // namespace detail

/// Attention with Dirac-scalar scores: weight(i,j) = softmax_j of
/// dirac_scalar(q_i, k_j)/sqrt(d_s), output_i = sum_j weight(i,j) v_j.
/// d_s is the even-subalgebra dimension 2^(n-1).
inline std::vector<Multivector> spinor_attention(const std::vector<Multivector>& queries,
                                                 const std::vector<Multivector>& keys,
                                                 const std::vector<Multivector>& values,
                                                 double d_s) {
  if (keys.empty()) throw ArgumentError("spinor_attention requires at least one key");
  if (keys.size() != values.size())
    throw ArgumentError("spinor_attention keys and values must have equal length");
  if (!(d_s > 0.0)) throw ArgumentError("spinor_attention scale d_s must be positive");
  return detail::attend_core(queries, keys, values, d_s, false);
}

/// One attention head's parameters: bivector generator coordinates for the
/// query, key, and value rotor maps.
struct HeadParams {
  std::vector<double> bq, bk, bv;
};

struct AttentionParams {
  std::vector<HeadParams> heads;

  void validate(const Algebra& alg) const {
    if (heads.empty()) throw ValidationError("attention requires at least one head");
    const std::size_t nb = alg.bivector_count();
    for (const HeadParams& h : heads)
      for (const std::vector<double>* g : {&h.bq, &h.bk, &h.bv}) {
        if (g->size() != nb)
          throw ValidationError("head generator length does not match bivector count");
        for (double c : *g)
          if (!std::isfinite(c)) throw ValidationError("non-finite head generator coefficient");
      }
  }
};

/// Q, K, V are one-sided rotor images of the inputs: q_i = exp(Bq) x_i and
/// so on. The maps are norm-preserving, and a global rotor applied to every
/// input cancels inside each score.
inline std::vector<Multivector> attention_head(const std::vector<Multivector>& inputs,
                                               const HeadParams& head, bool causal = false) {
  if (inputs.empty()) throw ArgumentError("attention requires at least one input");
  const Algebra& alg = inputs.front().algebra();
  const Multivector rq = exp_bivector(bivector_from_coords(alg, head.bq));
  const Multivector rk = exp_bivector(bivector_from_coords(alg, head.bk));
  const Multivector rv = exp_bivector(bivector_from_coords(alg, head.bv));
  std::vector<Multivector> qs, ks, vs;
  qs.reserve(inputs.size());
  ks.reserve(inputs.size());
  vs.reserve(inputs.size());
  for (const Multivector& x : inputs) {
    qs.push_back(geometric_product(rq, x));
    ks.push_back(geometric_product(rk, x));
    vs.push_back(geometric_product(rv, x));
  }
  return detail::attend_core(qs, ks, vs, static_cast<double>(alg.even_count()), causal);
}

/// Heads run independently and their outputs are averaged.
inline std::vector<Multivector> attention_layer(const std::vector<Multivector>& inputs,
                                                const AttentionParams& params,
                                                bool causal = false) {
  if (params.heads.empty()) throw ArgumentError("attention requires at least one head");
  const double w = 1.0 / static_cast<double>(params.heads.size());
  std::vector<Multivector> out;
  for (const HeadParams& h : params.heads) {
    const std::vector<Multivector> head_out = attention_head(inputs, h, causal);
    if (out.empty()) {
      for (const Multivector& m : head_out) out.push_back(m * w);
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += head_out[i] * w;
    }
  }
  return out;
}

/// Two-layer map applied independently to each even-subalgebra coordinate:
/// w2 * tanh(w1 * y + b1) + b2. This nonlinearity is deliberately not rotor
/// covariant; it is what gives the block capacity beyond rigid rotations.
struct FfwParams {
  std::vector<double> w1, b1, w2, b2;

  void validate(const Algebra& alg) const {
    const std::size_t ds = alg.even_count();
    for (const std::vector<double>* a : {&w1, &b1, &w2, &b2}) {
      if (a->size() != ds)
        throw ValidationError("feed-forward parameter length does not match even dimension");
      for (double c : *a)
        if (!std::isfinite(c)) throw ValidationError("non-finite feed-forward coefficient");
    }
  }
};

inline Multivector feed_forward(const FfwParams& f, const Multivector& y) {
  const auto blades = y.algebra().even_blades();
  if (f.w1.size() != blades.size())
    throw ArgumentError("feed-forward parameter length does not match even dimension");
  Multivector out(y.algebra());
  for (std::size_t k = 0; k < blades.size(); ++k) {
    const double yc = y[blades[k]];
    out[blades[k]] = f.w2[k] * std::tanh(f.w1[k] * yc + f.b1[k]) + f.b2[k];
  }
  return out;
}

struct BlockParams {
  AttentionParams attn;
  FfwParams ffw;

  void validate(const Algebra& alg) const {
    attn.validate(alg);
    ffw.validate(alg);
  }
};

/// Minimal residual block: y = x + attention(x), z = y + ffw(y). Even
/// inputs give even outputs, since every stage stays in the even
/// subalgebra.
inline std::vector<Multivector> transformer_block(const std::vector<Multivector>& inputs,
                                                  const BlockParams& params,
                                                  bool causal = false) {
  const std::vector<Multivector> attn = attention_layer(inputs, params.attn, causal);
  std::vector<Multivector> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Multivector y = inputs[i] + attn[i];
    out.push_back(y + feed_forward(params.ffw, y));
  }
  return out;
}

// --- tape-recorded twins, used for training ------------------------------
//
// Same arithmetic as the plain functions above, recorded on a tape so the
// block can be differentiated. Parameters enter as leaves; exp goes through
// the recorded series graph.

struct HeadVars {
  Var bq, bk, bv;
};

struct BlockVars {
  std::vector<HeadVars> heads;
  Var w1, b1, w2, b2;
};

inline BlockVars record_block_params(Tape& t, const BlockParams& p) {
  const Algebra& alg = t.algebra();
  p.validate(alg);
  BlockVars v;
  for (const HeadParams& h : p.attn.heads)
    v.heads.push_back({t.leaf(bivector_from_coords(alg, h.bq)),
                       t.leaf(bivector_from_coords(alg, h.bk)),
                       t.leaf(bivector_from_coords(alg, h.bv))});
  v.w1 = t.leaf(even_from_coords(alg, p.ffw.w1));
  v.b1 = t.leaf(even_from_coords(alg, p.ffw.b1));
  v.w2 = t.leaf(even_from_coords(alg, p.ffw.w2));
  v.b2 = t.leaf(even_from_coords(alg, p.ffw.b2));
  return v;
}

inline std::vector<Var> record_attention_head(Tape& t, const std::vector<Var>& inputs,
                                              const HeadVars& h, bool causal) {
  if (inputs.empty()) throw ArgumentError("attention requires at least one input");
  const Var rq = t.exp_series(h.bq);
  const Var rk = t.exp_series(h.bk);
  const Var rv = t.exp_series(h.bv);
  std::vector<Var> qs, ks, vs;
  for (Var x : inputs) {
    qs.push_back(t.product(rq, x));
    ks.push_back(t.product(rk, x));
    vs.push_back(t.product(rv, x));
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(t.algebra().even_count()));
  std::vector<Var> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t jmax = causal ? i + 1 : inputs.size();
    std::vector<Var> scores;
    scores.reserve(jmax);
    for (std::size_t j = 0; j < jmax; ++j)
      scores.push_back(t.scale(t.dirac_scalar(qs[i], ks[j]), inv));
    const std::vector<Var> w = t.softmax(scores);
    Var mix = t.product(w[0], vs[0]);
    for (std::size_t j = 1; j < jmax; ++j) mix = t.add(mix, t.product(w[j], vs[j]));
    out.push_back(mix);
  }
  return out;
}

inline std::vector<Var> record_block(Tape& t, const std::vector<Var>& inputs,
                                     const BlockVars& p, bool causal) {
  if (p.heads.empty()) throw ArgumentError("attention requires at least one head");
  std::vector<Var> attn;
  const double hw = 1.0 / static_cast<double>(p.heads.size());
  for (const HeadVars& h : p.heads) {
    const std::vector<Var> head_out = record_attention_head(t, inputs, h, causal);
    if (attn.empty()) {
      for (Var v : head_out) attn.push_back(t.scale(v, hw));
    } else {
      for (std::size_t i = 0; i < attn.size(); ++i)
        attn[i] = t.combine({{1.0, attn[i]}, {hw, head_out[i]}});
    }
  }
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Var y = t.add(inputs[i], attn[i]);
    const Var pre = t.add(t.cwise_mul(p.w1, y), p.b1);
    const Var f = t.add(t.cwise_mul(p.w2, t.cwise_tanh(pre)), p.b2);
    out.push_back(t.add(y, f));
  }
  return out;
}

}  // namespace spinlm
