#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "spinlm/attention.hpp"
#include "spinlm/autodiff.hpp"
#include "spinlm/errors.hpp"
#include "spinlm/random.hpp"
#include "spinlm/spinor.hpp"

namespace spinlm {

/// Tokenized corpus with a train/validation boundary: tokens[0, split) are
/// the training stream, tokens[split, end) the validation stream.
struct ToyCorpus {
  std::vector<int> tokens;
  std::vector<std::string> vocab;
  std::size_t split = 0;

  void validate() const {
    if (vocab.empty()) throw ValidationError("corpus has an empty vocabulary");
    if (tokens.size() < 4) throw ValidationError("corpus too small: need at least 4 tokens");
    if (split < 2 || split + 2 > tokens.size())
      throw ValidationError("corpus split must leave at least 2 tokens on each side");
    for (int id : tokens)
      if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
        throw ValidationError("corpus token id out of vocabulary range");
  }

  std::vector<int> train_slice() const {
    return std::vector<int>(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(split));
  }
  std::vector<int> val_slice() const {
    return std::vector<int>(tokens.begin() + static_cast<std::ptrdiff_t>(split), tokens.end());
  }
};

struct TrainConfig {
  std::uint64_t seed = 1;
  double learning_rate = 1.0;
  double momentum = 0.97;
  int epochs = 300;
  int batch = 32;
  int p = 3;
  int q = 0;
  int heads = 1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ArgumentError("momentum must lie in [0, 1)");
    if (epochs < 0) throw ArgumentError("epoch count must be nonnegative");
    if (batch < 1) throw ArgumentError("batch (window length) must be at least 1");
    if (heads < 1) throw ArgumentError("head count must be at least 1");
  }
};

// --- analogy rotor fitting -----------------------------------------------

struct FitResult {
  Multivector rotor;
  double final_loss;
  std::vector<double> loss_history;
};

namespace detail {

inline double fit_loss(const Algebra& alg, const std::vector<double>& coords,
                       const std::vector<std::pair<Multivector, Multivector>>& pairs) {
  // exp_series, not the closed form, so values are bitwise comparable with
  // the tape forward used for gradients.
  const Multivector r = exp_series(bivector_from_coords(alg, coords));
  double total = 0.0;
  for (const auto& [src, tgt] : pairs) {
    const Multivector d = geometric_product(r, src) - tgt;
    double s = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c) s += d[c] * d[c];
    total += s;
  }
  return total;
}

}  // namespace detail

/// Gradient descent with Armijo backtracking over a single bivector
/// generator B, minimizing the summed squared coefficient error of
/// exp(B) * source against target. Accepted steps never increase the loss.
/// The trial step carries over between iterations and doubles after every
/// accepted step, so the effective step adapts to the local curvature
/// instead of restarting the backtracking from scratch.
inline FitResult fit_rotor(const std::vector<std::pair<Multivector, Multivector>>& pairs,
                           int max_iters = 5000) {
  if (pairs.empty()) throw ArgumentError("fit_rotor requires at least one pair");
  const Algebra alg = pairs.front().first.algebra();
  for (const auto& [src, tgt] : pairs) src.require_same(tgt);
  const std::size_t nb = alg.bivector_count();
  std::vector<double> coords(nb, 0.0);

  double current = detail::fit_loss(alg, coords, pairs);
  if (!std::isfinite(current)) throw NumericError("rotor fit loss is not finite at the origin");
  std::vector<double> history{current};

  double step = 1.0;
  for (int it = 0; it < max_iters && current > 1e-22; ++it) {
    Tape tape(alg);
    const Var b = tape.leaf(bivector_from_coords(alg, coords));
    const Var r = tape.exp_series(b);
    std::vector<std::pair<double, Var>> terms;
    terms.reserve(pairs.size());
    for (const auto& [src, tgt] : pairs)
      terms.push_back({1.0, tape.coeff_sumsq(tape.sub(tape.product(r, tape.leaf(src)),
                                                      tape.leaf(tgt)))});
    const Gradients g = tape.backward(tape.combine(terms));
    const std::vector<double> grad = bivector_coords(g.at(b));
    double gsq = 0.0;
    for (double gc : grad) gsq += gc * gc;
    if (gsq < 1e-24) break;

    std::vector<double> cand(nb);
    bool accepted = false;
    double cand_loss = 0.0;
    while (step > 1e-16) {
      for (std::size_t k = 0; k < nb; ++k) cand[k] = coords[k] - step * grad[k];
      cand_loss = detail::fit_loss(alg, cand, pairs);
      if (std::isfinite(cand_loss) && cand_loss <= current - 1e-4 * step * gsq) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    coords = cand;
    current = cand_loss;
    history.push_back(current);
    step = std::min(step * 2.0, 64.0);
  }
  if (!std::isfinite(current))
    throw NumericError("rotor fit produced a non-finite loss; reduce the step size");
  return {exp_bivector(bivector_from_coords(alg, coords)), current, std::move(history)};
}

/// Rotors act identically up to global sign under two-sided conjugation;
/// reports fix scalar part >= 0. Do not canonicalize before one-sided use.
inline Multivector canonical_rotor(const Multivector& r) {
  return scalar_part(r) < 0.0 ? -r : r;
}

/// Top-1 accuracy of analogy ranking over held-out (source, target) token
/// id pairs.
inline double analogy_eval(const Multivector& rotor,
                           const std::vector<std::pair<int, int>>& held_out,
                           const EmbeddingTable& table) {
  if (held_out.empty()) throw ArgumentError("analogy_eval requires at least one held-out pair");
  std::vector<Multivector> vocab_spinors;
  vocab_spinors.reserve(table.size());
  for (std::size_t t = 0; t < table.size(); ++t) vocab_spinors.push_back(table.spinor(t));
  std::size_t hits = 0;
  for (const auto& [src, tgt] : held_out) {
    if (src < 0 || tgt < 0 || static_cast<std::size_t>(src) >= table.size() ||
        static_cast<std::size_t>(tgt) >= table.size())
      throw ArgumentError("held-out pair references a token outside the vocabulary");
    const auto ranked = analogy_apply(rotor, vocab_spinors[static_cast<std::size_t>(src)],
                                      vocab_spinors);
    if (ranked.front().index == static_cast<std::size_t>(tgt)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(held_out.size());
}

// --- spinor language model -----------------------------------------------

struct SpinorLmModel {
  EmbeddingTable table;
  PositionalConfig positional;
  BlockParams block;
  std::uint64_t seed = 0;
  int epochs_trained = 0;

  const Algebra& alg() const { return table.alg; }
};

struct EpochStats {
  int epoch;
  double train_ppl;
  double val_ppl;
};

/// Random init draws every parameter family except the final feed-forward
/// bias from the seeded generator in a fixed order (token generators, then
/// per-head q/k/v generators, then w1, b1, w2). The spread of 0.4 keeps the
/// initial score gaps small, so an untrained model scores close to the
/// uniform predictor, while still breaking the symmetries that would
/// otherwise trap gradient descent at exactly-uniform predictions. zero_init
/// gives the exactly-uniform model: every embedding is the scalar 1, so all
/// logits coincide.
inline SpinorLmModel init_spinor_lm(const Algebra& alg, std::vector<std::string> vocab,
                                    std::uint64_t seed, int heads = 1, bool zero_init = false) {
  Rng rng(seed);
  const std::size_t nb = alg.bivector_count();
  const std::size_t ds = alg.even_count();
  const double spread = 0.4;
  SpinorLmModel m{EmbeddingTable{alg, std::move(vocab), {}}, default_positional_config(alg),
                  BlockParams{}, seed, 0};
  m.table.generators.resize(m.table.vocab.size());
  for (auto& g : m.table.generators) {
    g.resize(nb);
    if (!zero_init)
      for (double& c : g) c = rng.uniform(-spread, spread);
  }
  for (int h = 0; h < heads; ++h) {
    HeadParams hp{std::vector<double>(nb, 0.0), std::vector<double>(nb, 0.0),
                  std::vector<double>(nb, 0.0)};
    if (!zero_init)
      for (std::vector<double>* g : {&hp.bq, &hp.bk, &hp.bv})
        for (double& c : *g) c = rng.uniform(-spread, spread);
    m.block.attn.heads.push_back(std::move(hp));
  }
  m.block.ffw.w1.resize(ds, 0.0);
  m.block.ffw.b1.resize(ds, 0.0);
  m.block.ffw.w2.resize(ds, 0.0);
  m.block.ffw.b2.resize(ds, 0.0);
  if (!zero_init) {
    for (double& c : m.block.ffw.w1) c = rng.uniform(-spread, spread);
    for (double& c : m.block.ffw.b1) c = rng.uniform(-spread, spread);
    for (double& c : m.block.ffw.w2) c = rng.uniform(-spread, spread);
  }
  return m;
}

/// exp(mean next-token negative log-likelihood) over the whole sequence,
/// causal, positions counted from the start of the sequence. Computed in
/// log-sum-exp form, so probabilities never underflow.
///
/// Logits compare the position-unwound block output against the raw token
/// spinors: logit(t at i) = dirac_scalar(reverse(R_i) z_i, psi_t)/sqrt(d_s).
/// Unwinding matters because the vocabulary spinors carry no position: left
/// multiplication by R_i is a score isometry, so without it a token's score
/// would swing with i and average to nothing over a rotation period.
/// Positions still shape the output through attention, where relative
/// rotors reverse(R_i) R_j survive the unwinding.
inline double perplexity(const SpinorLmModel& m, const std::vector<int>& seq) {
  if (seq.size() < 2) throw ArgumentError("perplexity requires a sequence of at least 2 tokens");
  const std::vector<int> inputs(seq.begin(), seq.end() - 1);
  const std::vector<Multivector> x = embed_sequence(inputs, m.table, m.positional);
  const std::vector<Multivector> z = transformer_block(x, m.block, true);
  std::vector<Multivector> psi;
  psi.reserve(m.table.size());
  for (std::size_t t = 0; t < m.table.size(); ++t) psi.push_back(m.table.spinor(t));
  const double inv = 1.0 / std::sqrt(static_cast<double>(m.alg().even_count()));
  double nll = 0.0;
  std::vector<double> scores(m.table.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const Multivector out = geometric_product(
        reverse(positional_rotor(static_cast<int>(i), m.positional, m.alg())), z[i]);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < psi.size(); ++t) {
      scores[t] = dirac_scalar(out, psi[t]) * inv;
      hi = std::max(hi, scores[t]);
    }
    double total = 0.0;
    for (double s : scores) total += std::exp(s - hi);
    nll += hi + std::log(total) - scores[static_cast<std::size_t>(seq[i + 1])];
  }
  const double ppl = std::exp(nll / static_cast<double>(z.size()));
  if (!std::isfinite(ppl)) throw NumericError("perplexity is not finite");
  return ppl;
}

namespace detail {

/// Non-overlapping training windows: token slice [s, e] supplies inputs
/// s..e-1 and targets s+1..e. Consecutive slices share one boundary token,
/// so every train token past the first is a target exactly once.
inline std::vector<std::pair<std::size_t, std::size_t>> training_windows(std::size_t limit,
                                                                         std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s + 1 < limit; s += batch)
    out.push_back({s, std::min(s + batch, limit - 1)});
  return out;
}

/// Heavy-ball velocity buffers, one per trainable array, owned by the
/// epoch loop so momentum carries across windows and epochs.
struct SpinorMomentum {
  std::vector<std::vector<double>> gen;
  std::vector<std::array<std::vector<double>, 3>> heads;
  std::array<std::vector<double>, 4> ffw;

  explicit SpinorMomentum(const SpinorLmModel& m) {
    const std::size_t nb = m.alg().bivector_count();
    const std::size_t ds = m.alg().even_count();
    gen.assign(m.table.size(), std::vector<double>(nb, 0.0));
    heads.assign(m.block.attn.heads.size(),
                 {std::vector<double>(nb, 0.0), std::vector<double>(nb, 0.0),
                  std::vector<double>(nb, 0.0)});
    ffw = {std::vector<double>(ds, 0.0), std::vector<double>(ds, 0.0),
           std::vector<double>(ds, 0.0), std::vector<double>(ds, 0.0)};
  }
};

/// One optimizer step on one window: record the forward pass, backprop the
/// mean cross-entropy, clip the global gradient norm, then take a
/// heavy-ball step (velocity = beta * velocity - lr * clipped gradient).
/// Returns the window loss. The logit head unwinds the positional rotor,
/// mirroring perplexity().
inline double spinor_window_step(SpinorLmModel& m, SpinorMomentum& mom,
                                 const std::vector<int>& tokens, std::size_t s, std::size_t e,
                                 double lr, double clip, double beta) {
  const Algebra& alg = m.table.alg;
  const std::size_t vocab = m.table.size();
  Tape tape(alg);

  std::vector<Var> gen(vocab), psi(vocab);
  for (std::size_t t = 0; t < vocab; ++t) {
    gen[t] = tape.leaf(bivector_from_coords(alg, m.table.generators[t]));
    psi[t] = tape.exp_series(gen[t]);
  }
  const BlockVars pvars = record_block_params(tape, m.block);

  const std::size_t len = e - s;
  std::vector<Var> x, unwind;
  x.reserve(len);
  unwind.reserve(len);
  for (std::size_t i = 0; i < len; ++i) {
    const Multivector rp = positional_rotor(static_cast<int>(i), m.positional, alg);
    x.push_back(tape.product(tape.leaf(rp), psi[static_cast<std::size_t>(tokens[s + i])]));
    unwind.push_back(tape.leaf(reverse(rp)));
  }
  const std::vector<Var> z = record_block(tape, x, pvars, true);

  const double inv = 1.0 / std::sqrt(static_cast<double>(alg.even_count()));
  std::vector<std::pair<double, Var>> nll_terms;
  nll_terms.reserve(len);
  for (std::size_t i = 0; i < len; ++i) {
    const Var out = tape.product(unwind[i], z[i]);
    std::vector<Var> scores;
    scores.reserve(vocab);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < vocab; ++t) {
      scores.push_back(tape.scale(tape.dirac_scalar(out, psi[t]), inv));
      hi = std::max(hi, scalar_part(tape.value(scores.back())));
    }
    const Var shift = tape.constant(hi);
    std::vector<std::pair<double, Var>> exps;
    exps.reserve(vocab);
    for (std::size_t t = 0; t < vocab; ++t)
      exps.push_back({1.0, tape.scalar_exp(tape.sub(scores[t], shift))});
    const Var lse = tape.add(shift, tape.scalar_log(tape.combine(exps)));
    const Var target = scores[static_cast<std::size_t>(tokens[s + i + 1])];
    nll_terms.push_back({1.0 / static_cast<double>(len), tape.sub(lse, target)});
  }
  const Var loss = tape.combine(nll_terms);
  const double loss_value = scalar_part(tape.value(loss));
  if (!std::isfinite(loss_value)) return loss_value;

  const Gradients g = tape.backward(loss);
  std::vector<std::vector<double>> gen_g(vocab);
  for (std::size_t t = 0; t < vocab; ++t) gen_g[t] = bivector_coords(g.at(gen[t]));
  std::vector<std::array<std::vector<double>, 3>> head_g;
  for (const HeadVars& h : pvars.heads)
    head_g.push_back({bivector_coords(g.at(h.bq)), bivector_coords(g.at(h.bk)),
                      bivector_coords(g.at(h.bv))});
  std::array<std::vector<double>, 4> ffw_g = {even_coords(g.at(pvars.w1)),
                                              even_coords(g.at(pvars.b1)),
                                              even_coords(g.at(pvars.w2)),
                                              even_coords(g.at(pvars.b2))};

  double sq = 0.0;
  auto add_sq = [&sq](const std::vector<double>& v) {
    for (double c : v) sq += c * c;
  };
  for (const auto& v : gen_g) add_sq(v);
  for (const auto& hg : head_g)
    for (const auto& v : hg) add_sq(v);
  for (const auto& v : ffw_g) add_sq(v);
  const double norm = std::sqrt(sq);
  const double factor = (norm > clip) ? lr * clip / norm : lr;

  auto step_param = [factor, beta](std::vector<double>& param, std::vector<double>& vel,
                                   const std::vector<double>& grad) {
    for (std::size_t k = 0; k < param.size(); ++k) {
      vel[k] = beta * vel[k] - factor * grad[k];
      param[k] += vel[k];
    }
  };
  for (std::size_t t = 0; t < vocab; ++t)
    step_param(m.table.generators[t], mom.gen[t], gen_g[t]);
  for (std::size_t h = 0; h < head_g.size(); ++h) {
    step_param(m.block.attn.heads[h].bq, mom.heads[h][0], head_g[h][0]);
    step_param(m.block.attn.heads[h].bk, mom.heads[h][1], head_g[h][1]);
    step_param(m.block.attn.heads[h].bv, mom.heads[h][2], head_g[h][2]);
  }
  step_param(m.block.ffw.w1, mom.ffw[0], ffw_g[0]);
  step_param(m.block.ffw.b1, mom.ffw[1], ffw_g[1]);
  step_param(m.block.ffw.w2, mom.ffw[2], ffw_g[2]);
  step_param(m.block.ffw.b2, mom.ffw[3], ffw_g[3]);
  return loss_value;
}

}  // namespace detail

struct TrainResult {
  SpinorLmModel model;
  std::vector<EpochStats> curve;
};

/// Full training run: fixed window order, heavy-ball SGD with gradient-norm
/// clipping at 10, perplexity recorded before training (epoch 0) and after
/// every epoch. Bit-deterministic for a given corpus and config.
inline TrainResult train_lm(const ToyCorpus& corpus, const TrainConfig& cfg) {
  corpus.validate();
  cfg.validate();
  const Algebra alg(cfg.p, cfg.q);
  TrainResult out{init_spinor_lm(alg, corpus.vocab, cfg.seed, cfg.heads), {}};
  const std::vector<int> train_tokens = corpus.train_slice();
  const std::vector<int> val_tokens = corpus.val_slice();
  out.curve.push_back({0, perplexity(out.model, train_tokens), perplexity(out.model, val_tokens)});
  const auto windows = detail::training_windows(corpus.split, static_cast<std::size_t>(cfg.batch));
  detail::SpinorMomentum mom(out.model);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& [s, e] : windows) {
      const double loss = detail::spinor_window_step(out.model, mom, corpus.tokens, s, e,
                                                     cfg.learning_rate, 10.0, cfg.momentum);
      if (!std::isfinite(loss))
        throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                           " (non-finite loss); reduce the learning rate");
    }
    out.model.epochs_trained = epoch;
    out.curve.push_back({epoch, perplexity(out.model, train_tokens),
                         perplexity(out.model, val_tokens)});
  }
  return out;
}

// --- baseline: plain coefficient-vector language model -------------------
//
// Same skeleton under the same harness, but embeddings are ordinary real
// vectors of dimension n(n-1)/2 (matching the spinor generator count),
// attention is scaled dot-product with per-coordinate Q/K/V scaling, and
// positions are added as a sinusoidal code built from the same frequency
// ladder. Stored in the grade-2 coordinates of multivectors so the same
// tape machinery trains it.

struct BaselineLmModel {
  Algebra alg;
  std::vector<std::string> vocab;
  std::vector<std::vector<double>> embeddings;
  std::vector<double> wq, wk, wv;
  std::vector<double> w1, b1, w2, b2;
  double base_frequency = 1.0;
  double frequency_decay = 0.1;
  std::uint64_t seed = 0;
  int epochs_trained = 0;

  std::size_t dim() const { return alg.bivector_count(); }

  void validate() const {
    const std::size_t nb = alg.bivector_count();
    if (vocab.size() != embeddings.size())
      throw ValidationError("baseline vocab and embedding counts differ");
    for (const auto& e : embeddings)
      if (e.size() != nb) throw ValidationError("baseline embedding length mismatch");
    for (const std::vector<double>* a : {&wq, &wk, &wv, &w1, &b1, &w2, &b2})
      if (a->size() != nb) throw ValidationError("baseline parameter length mismatch");
  }
};

inline std::vector<double> baseline_positions(std::size_t dim, int p, double base, double decay) {
  std::vector<double> out(dim, 0.0);
  double freq = base;
  for (std::size_t k = 0; k < dim; k += 2) {
    out[k] = std::sin(p * freq);
    if (k + 1 < dim) out[k + 1] = std::cos(p * freq);
    freq *= decay;
  }
  return out;
}

inline BaselineLmModel init_baseline_lm(const Algebra& alg, std::vector<std::string> vocab,
                                        std::uint64_t seed, bool zero_init = false) {
  Rng rng(seed);
  const std::size_t nb = alg.bivector_count();
  BaselineLmModel m{alg,
                    std::move(vocab),
                    {},
                    std::vector<double>(nb, 1.0),
                    std::vector<double>(nb, 1.0),
                    std::vector<double>(nb, 1.0),
                    std::vector<double>(nb, 0.0),
                    std::vector<double>(nb, 0.0),
                    std::vector<double>(nb, 0.0),
                    std::vector<double>(nb, 0.0),
                    1.0,
                    0.1,
                    seed,
                    0};
  // Same init contract as the spinor model: spread 0.4 on everything that
  // is random there, identity scaling on q/k/v, zero final bias.
  const double spread = 0.4;
  m.embeddings.resize(m.vocab.size());
  for (auto& e : m.embeddings) {
    e.resize(nb, 0.0);
    if (!zero_init)
      for (double& c : e) c = rng.uniform(-spread, spread);
  }
  if (!zero_init) {
    for (double& c : m.w1) c = rng.uniform(-spread, spread);
    for (double& c : m.b1) c = rng.uniform(-spread, spread);
    for (double& c : m.w2) c = rng.uniform(-spread, spread);
  }
  return m;
}

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

inline double baseline_perplexity(const BaselineLmModel& m, const std::vector<int>& seq) {
  if (seq.size() < 2) throw ArgumentError("perplexity requires a sequence of at least 2 tokens");
  m.validate();
  const std::size_t nb = m.dim();
  const std::size_t len = seq.size() - 1;
  const double inv = 1.0 / std::sqrt(static_cast<double>(nb));

  std::vector<std::vector<double>> x(len), qs(len), ks(len), vs(len);
  for (std::size_t i = 0; i < len; ++i) {
    x[i] = m.embeddings[static_cast<std::size_t>(seq[i])];
    const std::vector<double> pe =
        baseline_positions(nb, static_cast<int>(i), m.base_frequency, m.frequency_decay);
    for (std::size_t k = 0; k < nb; ++k) x[i][k] += pe[k];
    qs[i].resize(nb);
    ks[i].resize(nb);
    vs[i].resize(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      qs[i][k] = m.wq[k] * x[i][k];
      ks[i][k] = m.wk[k] * x[i][k];
      vs[i][k] = m.wv[k] * x[i][k];
    }
  }

  double nll = 0.0;
  std::vector<double> logits(m.vocab.size());
  for (std::size_t i = 0; i < len; ++i) {
    std::vector<double> scores(i + 1);
    for (std::size_t j = 0; j <= i; ++j) scores[j] = detail::dot(qs[i], ks[j]) * inv;
    const std::vector<double> w = softmax(scores);
    std::vector<double> y = x[i];
    for (std::size_t j = 0; j <= i; ++j)
      for (std::size_t k = 0; k < nb; ++k) y[k] += w[j] * vs[j][k];
    std::vector<double> z = y;
    for (std::size_t k = 0; k < nb; ++k)
      z[k] += m.w2[k] * std::tanh(m.w1[k] * y[k] + m.b1[k]) + m.b2[k];

    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < m.vocab.size(); ++t) {
      logits[t] = detail::dot(z, m.embeddings[t]) * inv;
      hi = std::max(hi, logits[t]);
    }
    double total = 0.0;
    for (double s : logits) total += std::exp(s - hi);
    nll += hi + std::log(total) - logits[static_cast<std::size_t>(seq[i + 1])];
  }
  const double ppl = std::exp(nll / static_cast<double>(len));
  if (!std::isfinite(ppl)) throw NumericError("perplexity is not finite");
  return ppl;
}

namespace detail {

struct BaselineMomentum {
  std::vector<std::vector<double>> emb;
  std::array<std::vector<double>, 7> params;

  explicit BaselineMomentum(const BaselineLmModel& m) {
    const std::size_t nb = m.dim();
    emb.assign(m.vocab.size(), std::vector<double>(nb, 0.0));
    for (auto& v : params) v.assign(nb, 0.0);
  }
};

inline double baseline_window_step(BaselineLmModel& m, BaselineMomentum& mom,
                                   const std::vector<int>& tokens, std::size_t s, std::size_t e,
                                   double lr, double clip, double beta) {
  const Algebra& alg = m.alg;
  const std::size_t nb = m.dim();
  const std::size_t vocab = m.vocab.size();
  Tape tape(alg);

  std::vector<Var> emb(vocab);
  for (std::size_t t = 0; t < vocab; ++t)
    emb[t] = tape.leaf(bivector_from_coords(alg, m.embeddings[t]));
  const Var wq = tape.leaf(bivector_from_coords(alg, m.wq));
  const Var wk = tape.leaf(bivector_from_coords(alg, m.wk));
  const Var wv = tape.leaf(bivector_from_coords(alg, m.wv));
  const Var w1 = tape.leaf(bivector_from_coords(alg, m.w1));
  const Var b1 = tape.leaf(bivector_from_coords(alg, m.b1));
  const Var w2 = tape.leaf(bivector_from_coords(alg, m.w2));
  const Var b2 = tape.leaf(bivector_from_coords(alg, m.b2));

  const std::size_t len = e - s;
  const double inv = 1.0 / std::sqrt(static_cast<double>(nb));
  std::vector<Var> x, qs, ks, vs;
  for (std::size_t i = 0; i < len; ++i) {
    const Var pe = tape.leaf(bivector_from_coords(
        alg, baseline_positions(nb, static_cast<int>(i), m.base_frequency, m.frequency_decay)));
    x.push_back(tape.add(emb[static_cast<std::size_t>(tokens[s + i])], pe));
    qs.push_back(tape.cwise_mul(wq, x.back()));
    ks.push_back(tape.cwise_mul(wk, x.back()));
    vs.push_back(tape.cwise_mul(wv, x.back()));
  }

  std::vector<std::pair<double, Var>> nll_terms;
  for (std::size_t i = 0; i < len; ++i) {
    std::vector<Var> scores;
    for (std::size_t j = 0; j <= i; ++j)
      scores.push_back(tape.scale(tape.coeff_sum(tape.cwise_mul(qs[i], ks[j])), inv));
    const std::vector<Var> w = tape.softmax(scores);
    Var mix = tape.product(w[0], vs[0]);
    for (std::size_t j = 1; j <= i; ++j) mix = tape.add(mix, tape.product(w[j], vs[j]));
    const Var y = tape.add(x[i], mix);
    const Var pre = tape.add(tape.cwise_mul(w1, y), b1);
    const Var z = tape.add(y, tape.add(tape.cwise_mul(w2, tape.cwise_tanh(pre)), b2));

    std::vector<Var> logits;
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < vocab; ++t) {
      logits.push_back(tape.scale(tape.coeff_sum(tape.cwise_mul(z, emb[t])), inv));
      hi = std::max(hi, scalar_part(tape.value(logits.back())));
    }
    const Var shift = tape.constant(hi);
    std::vector<std::pair<double, Var>> exps;
    for (std::size_t t = 0; t < vocab; ++t)
      exps.push_back({1.0, tape.scalar_exp(tape.sub(logits[t], shift))});
    const Var lse = tape.add(shift, tape.scalar_log(tape.combine(exps)));
    nll_terms.push_back({1.0 / static_cast<double>(len),
                         tape.sub(lse, logits[static_cast<std::size_t>(tokens[s + i + 1])])});
  }
  const Var loss = tape.combine(nll_terms);
  const double loss_value = scalar_part(tape.value(loss));
  if (!std::isfinite(loss_value)) return loss_value;

  const Gradients g = tape.backward(loss);
  std::vector<std::vector<double>> emb_g(vocab);
  for (std::size_t t = 0; t < vocab; ++t) emb_g[t] = bivector_coords(g.at(emb[t]));
  std::array<std::vector<double>, 7> par_g = {
      bivector_coords(g.at(wq)), bivector_coords(g.at(wk)), bivector_coords(g.at(wv)),
      bivector_coords(g.at(w1)), bivector_coords(g.at(b1)), bivector_coords(g.at(w2)),
      bivector_coords(g.at(b2))};

  double sq = 0.0;
  for (const auto& v : emb_g)
    for (double c : v) sq += c * c;
  for (const auto& v : par_g)
    for (double c : v) sq += c * c;
  const double norm = std::sqrt(sq);
  const double factor = (norm > clip) ? lr * clip / norm : lr;
  auto step_param = [factor, beta](std::vector<double>& param, std::vector<double>& vel,
                                   const std::vector<double>& grad) {
    for (std::size_t k = 0; k < param.size(); ++k) {
      vel[k] = beta * vel[k] - factor * grad[k];
      param[k] += vel[k];
    }
  };
  for (std::size_t t = 0; t < vocab; ++t) step_param(m.embeddings[t], mom.emb[t], emb_g[t]);
  step_param(m.wq, mom.params[0], par_g[0]);
  step_param(m.wk, mom.params[1], par_g[1]);
  step_param(m.wv, mom.params[2], par_g[2]);
  step_param(m.w1, mom.params[3], par_g[3]);
  step_param(m.b1, mom.params[4], par_g[4]);
  step_param(m.w2, mom.params[5], par_g[5]);
  step_param(m.b2, mom.params[6], par_g[6]);
  return loss_value;
}

}  // namespace detail

struct BaselineTrainResult {
  BaselineLmModel model;
  std::vector<EpochStats> curve;
};

inline BaselineTrainResult train_baseline_lm(const ToyCorpus& corpus, const TrainConfig& cfg) {
  corpus.validate();
  cfg.validate();
  const Algebra alg(cfg.p, cfg.q);
  BaselineTrainResult out{init_baseline_lm(alg, corpus.vocab, cfg.seed), {}};
  const std::vector<int> train_tokens = corpus.train_slice();
  const std::vector<int> val_tokens = corpus.val_slice();
  out.curve.push_back({0, baseline_perplexity(out.model, train_tokens),
                       baseline_perplexity(out.model, val_tokens)});
  const auto windows = detail::training_windows(corpus.split, static_cast<std::size_t>(cfg.batch));
  detail::BaselineMomentum mom(out.model);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& [s, e] : windows) {
      const double loss = detail::baseline_window_step(out.model, mom, corpus.tokens, s, e,
                                                       cfg.learning_rate, 10.0, cfg.momentum);
      if (!std::isfinite(loss))
        throw NumericError("baseline training diverged at epoch " + std::to_string(epoch) +
                           " (non-finite loss); reduce the learning rate");
    }
    out.model.epochs_trained = epoch;
    out.curve.push_back({epoch, baseline_perplexity(out.model, train_tokens),
                         baseline_perplexity(out.model, val_tokens)});
  }
  return out;
}

inline std::size_t spinor_param_count(const SpinorLmModel& m) {
  const std::size_t nb = m.alg().bivector_count();
  return m.table.size() * nb + m.block.attn.heads.size() * 3 * nb + 4 * m.alg().even_count();
}

inline std::size_t baseline_param_count(const BaselineLmModel& m) {
  const std::size_t nb = m.dim();
  return m.vocab.size() * nb + 3 * nb + 4 * nb;
}

// --- signature ablation --------------------------------------------------

struct AblateRow {
  std::string signature;
  double final_val_ppl;
  double seconds;
};

/// Train the spinor LM once per signature (input order preserved) and
/// report final validation perplexity with wall-clock time. Wall-clock is
/// the one deliberately machine-dependent column.
inline std::vector<AblateRow> ablate_signatures(const ToyCorpus& corpus,
                                                const std::vector<std::pair<int, int>>& sigs,
                                                const TrainConfig& base_cfg) {
  if (sigs.empty()) throw ArgumentError("ablate requires at least one signature");
  for (const auto& [p, q] : sigs)
    if (p < 0 || q < 0 || p + q < 1 || p + q > 6)
      throw ArgumentError("ablation signatures must satisfy 1 <= p+q <= 6");
  std::vector<AblateRow> rows;
  rows.reserve(sigs.size());
  for (const auto& [p, q] : sigs) {
    TrainConfig cfg = base_cfg;
    cfg.p = p;
    cfg.q = q;
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult res = train_lm(corpus, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
    rows.push_back({Algebra(p, q).name(), res.curve.back().val_ppl, secs});
  }
  return rows;
}

}  // namespace spinlm
