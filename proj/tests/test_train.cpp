#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "spinlm/errors.hpp"
#include "spinlm/random.hpp"
#include "spinlm/train.hpp"

using namespace spinlm;

namespace {

ToyCorpus alternating_corpus(int repeats) {
  ToyCorpus c;
  c.vocab = {"a", "b"};
  for (int i = 0; i < repeats; ++i) {
    c.tokens.push_back(0);
    c.tokens.push_back(1);
  }
  c.split = c.tokens.size() * 9 / 10;
  return c;
}

Multivector unit_circular_bivector(const Algebra& alg, Rng& rng) {
  std::vector<double> c(alg.bivector_count());
  double norm = 0.0;
  for (double& x : c) {
    x = rng.uniform(-1.0, 1.0);
    norm += x * x;
  }
  for (double& x : c) x /= std::sqrt(norm);
  return bivector_from_coords(alg, c);
}

}  // namespace

TEST_CASE("corpus validation") {
  ToyCorpus c = alternating_corpus(10);
  CHECK_NOTHROW(c.validate());
  CHECK(c.train_slice().size() == 18);
  CHECK(c.val_slice().size() == 2);

  ToyCorpus bad = c;
  bad.split = 1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.tokens = {0, 1};
  bad.split = 1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.tokens[3] = 7;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.vocab.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("training config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = TrainConfig{};
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = TrainConfig{};
  cfg.heads = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = TrainConfig{};
  cfg.epochs = -1;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("training windows tile the train split with shared boundaries") {
  const auto w = detail::training_windows(216, 32);
  REQUIRE(!w.empty());
  CHECK(w.front().first == 0);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) CHECK(w[i + 1].first == w[i].first + 32);
  for (const auto& [s, e] : w) {
    CHECK(e >= s + 1);  // at least one next-token transition per window
    CHECK(e <= 215);    // targets stay inside the train split
  }
  CHECK(w.back().second == 215);
}

TEST_CASE("rotor fitting recovers a planted rotor from noiseless pairs") {
  const Algebra alg(3, 0);
  Rng rng(71);
  const Multivector plane = unit_circular_bivector(alg, rng);
  const Multivector truth = make_rotor(plane, 0.9);

  std::vector<std::pair<Multivector, Multivector>> pairs;
  std::vector<std::pair<int, int>> train_ids, holdout_ids;
  std::vector<Multivector> vocab_spinors;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> g(alg.bivector_count());
    for (double& x : g) x = rng.uniform(-0.4, 0.4);
    const Multivector source = exp_bivector(bivector_from_coords(alg, g));
    const Multivector target = geometric_product(truth, source);
    vocab_spinors.push_back(source);
    vocab_spinors.push_back(target);
    if (i < 8) {
      pairs.push_back({source, target});
      train_ids.push_back({2 * i, 2 * i + 1});
    } else {
      holdout_ids.push_back({2 * i, 2 * i + 1});
    }
  }

  const FitResult fit = fit_rotor(pairs);
  const double direct = max_abs_coeff(fit.rotor - truth);
  const double flipped = max_abs_coeff(fit.rotor + truth);
  CHECK(std::min(direct, flipped) < 1e-3);
  CHECK(fit.final_loss < 1e-6);
  for (std::size_t i = 0; i + 1 < fit.loss_history.size(); ++i)
    CHECK(fit.loss_history[i + 1] <= fit.loss_history[i] + 1e-15);

  // held-out pairs rank their true target first
  int hits = 0;
  for (const auto& [src, tgt] : holdout_ids) {
    const auto ranked = analogy_apply(fit.rotor, vocab_spinors[static_cast<std::size_t>(src)],
                                      vocab_spinors);
    if (static_cast<int>(ranked[0].index) == tgt) ++hits;
  }
  CHECK(hits == 4);

  CHECK_THROWS_AS(fit_rotor({}), ArgumentError);
}

TEST_CASE("canonical rotor display form has a nonnegative scalar part") {
  const Algebra alg(2, 0);
  const Multivector r = make_rotor(Multivector::basis_blade(alg, 0b11), 3.5);
  REQUIRE(r[0] < 0.0);
  const Multivector canon = canonical_rotor(r);
  CHECK(canon[0] >= 0.0);
  CHECK(max_abs_coeff(canon + r) == 0.0);
  CHECK(max_abs_coeff(canonical_rotor(canon) - canon) == 0.0);
}

TEST_CASE("analogy accuracy helper counts top-1 hits") {
  const Algebra alg(2, 0);
  EmbeddingTable table{alg, {"t0", "t1", "t2", "t3"}, {{0.3}, {-0.05}, {0.8}, {0.45}}};
  const Multivector rotor = exp_bivector(-0.35 * Multivector::basis_blade(alg, 0b11));
  // rotor moves t0 onto t1 and t2 onto t3 exactly
  CHECK(analogy_eval(rotor, {{0, 1}, {2, 3}}, table) == 1.0);
  CHECK(analogy_eval(rotor, {{0, 3}, {2, 3}}, table) == 0.5);
}

TEST_CASE("the zero-initialized model is exactly uniform") {
  const Algebra alg(3, 0);
  const SpinorLmModel m = init_spinor_lm(alg, {"a", "b", "c"}, 1, 1, true);
  const std::vector<int> seq = {0, 1, 2, 0, 1, 2};
  CHECK(perplexity(m, seq) == Catch::Approx(3.0).margin(1e-12));

  const BaselineLmModel b = init_baseline_lm(alg, {"a", "b", "c"}, 1, true);
  CHECK(baseline_perplexity(b, seq) == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("perplexity needs at least two tokens") {
  const Algebra alg(2, 0);
  const SpinorLmModel m = init_spinor_lm(alg, {"a", "b"}, 1);
  CHECK_THROWS_AS(perplexity(m, {0}), ArgumentError);
  CHECK(perplexity(m, {0, 1}) > 0.0);
}

TEST_CASE("language model training lowers perplexity on the alternating corpus") {
  const ToyCorpus corpus = alternating_corpus(120);
  TrainConfig cfg;
  cfg.epochs = 80;
  const TrainResult res = train_lm(corpus, cfg);

  REQUIRE(res.curve.size() == 81);
  CHECK(res.curve.front().epoch == 0);
  // untrained, the random small generators stay near the uniform bound
  CHECK(res.curve.front().val_ppl == Catch::Approx(2.0).epsilon(0.05));
  CHECK(res.curve.back().val_ppl < res.curve.front().val_ppl);
  CHECK(res.curve.back().val_ppl < 1.3);
  CHECK(res.model.epochs_trained == 80);
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  const ToyCorpus corpus = alternating_corpus(60);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  const TrainResult a = train_lm(corpus, cfg);
  const TrainResult b = train_lm(corpus, cfg);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].train_ppl == b.curve[i].train_ppl);
    CHECK(a.curve[i].val_ppl == b.curve[i].val_ppl);
  }
  for (std::size_t tok = 0; tok < a.model.table.size(); ++tok)
    CHECK(a.model.table.generators[tok] == b.model.table.generators[tok]);

  TrainConfig other = cfg;
  other.seed = 10;
  const TrainResult c = train_lm(corpus, other);
  CHECK(a.curve.back().val_ppl != c.curve.back().val_ppl);
}

TEST_CASE("an absurd learning rate raises a numeric failure") {
  const ToyCorpus corpus = alternating_corpus(40);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 1e12;
  CHECK_THROWS_AS(train_lm(corpus, cfg), NumericError);
}

TEST_CASE("baseline training runs the same harness shape") {
  const ToyCorpus corpus = alternating_corpus(120);
  TrainConfig cfg;
  cfg.epochs = 10;
  const BaselineTrainResult res = train_baseline_lm(corpus, cfg);
  REQUIRE(res.curve.size() == 11);
  CHECK(res.curve.front().epoch == 0);
  CHECK(res.curve.back().val_ppl < res.curve.front().val_ppl);

  const BaselineTrainResult rerun = train_baseline_lm(corpus, cfg);
  for (std::size_t i = 0; i < res.curve.size(); ++i)
    CHECK(res.curve[i].val_ppl == rerun.curve[i].val_ppl);
}

TEST_CASE("parameter counts stay within five percent at moderate vocabulary size") {
  const Algebra alg(3, 0);
  std::vector<std::string> vocab;
  for (int i = 0; i < 32; ++i) vocab.push_back("w" + std::to_string(i));
  const SpinorLmModel s = init_spinor_lm(alg, vocab, 1);
  const BaselineLmModel b = init_baseline_lm(alg, vocab, 1);
  const std::size_t sp = spinor_param_count(s);
  const std::size_t bp = baseline_param_count(b);
  CHECK(sp == 121);
  CHECK(bp == 117);
  CHECK(static_cast<double>(sp > bp ? sp - bp : bp - sp) / static_cast<double>(bp) <= 0.05);
}

TEST_CASE("signature sweep preserves order and trains each entry") {
  const ToyCorpus corpus = alternating_corpus(40);
  TrainConfig cfg;
  cfg.epochs = 2;
  const auto rows = ablate_signatures(corpus, {{2, 0}, {1, 1}, {0, 2}}, cfg);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].signature == "Cl(2,0)");
  CHECK(rows[1].signature == "Cl(1,1)");
  CHECK(rows[2].signature == "Cl(0,2)");
  for (const AblateRow& r : rows) {
    CHECK(std::isfinite(r.final_val_ppl));
    CHECK(r.final_val_ppl > 0.0);
    CHECK(r.seconds >= 0.0);
  }
  CHECK_THROWS_AS(ablate_signatures(corpus, {}, cfg), ArgumentError);
  CHECK_THROWS_AS(ablate_signatures(corpus, {{8, 0}}, cfg), ArgumentError);
}

TEST_CASE("multi-head training works end to end") {
  const ToyCorpus corpus = alternating_corpus(40);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.heads = 2;
  const TrainResult res = train_lm(corpus, cfg);
  CHECK(res.model.block.attn.heads.size() == 2);
  CHECK(std::isfinite(res.curve.back().val_ppl));
}
