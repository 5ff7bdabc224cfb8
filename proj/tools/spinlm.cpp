#include <cmath>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "spinlm/cayley.hpp"
#include "spinlm/errors.hpp"
#include "spinlm/model_io.hpp"
#include "spinlm/projection.hpp"
#include "spinlm/spinor.hpp"
#include "spinlm/train.hpp"

namespace {

using namespace spinlm;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt_double(v[i]);
  }
  return out;
}

void emit(const std::string& content, const std::string& out_path) {
  if (out_path.empty())
    std::cout << content;
  else
    write_text_file_atomic(out_path, content);
}

void run_algebra(int p, int q, bool table) {
  const Algebra alg(p, q);
  std::ostringstream out;
  out << "signature: " << alg.name() << "\n";
  out << "dimension: " << alg.dims() << "\n";
  out << "blade count: " << alg.blade_count() << "\n";
  out << "even dimension: " << alg.even_count() << "\n";
  out << "bivector count: " << alg.bivector_count() << "\n";
  out << "metric:";
  for (int i = 0; i < alg.dims(); ++i)
    out << " " << alg.blade_name(BladeMask{1} << i) << "^2="
        << (alg.metric_sign(i) > 0 ? "+1" : "-1");
  out << "\n";
  if (table) out << "\n" << dump_cayley_table(alg);
  std::cout << out.str();
}

std::string curve_csv(const std::vector<EpochStats>& curve) {
  std::string csv = "epoch,train_ppl,val_ppl\n";
  for (const EpochStats& e : curve)
    csv += std::to_string(e.epoch) + "," + fmt_double(e.train_ppl) + "," +
           fmt_double(e.val_ppl) + "\n";
  return csv;
}

void run_train(bool baseline, const std::string& corpus_path, const TrainConfig& cfg,
               std::size_t max_vocab, const std::string& out_path) {
  const ToyCorpus corpus = ingest_corpus(corpus_path, max_vocab);
  if (baseline) {
    const BaselineTrainResult res = train_baseline_lm(corpus, cfg);
    std::cout << curve_csv(res.curve);
    std::cerr << "vector-lm: vocab " << res.model.vocab.size() << ", parameters "
              << baseline_param_count(res.model) << "\n";
    if (!out_path.empty()) save_baseline_model(res.model, out_path);
  } else {
    const TrainResult res = train_lm(corpus, cfg);
    std::cout << curve_csv(res.curve);
    std::cerr << "spinor-lm: vocab " << res.model.table.size() << ", parameters "
              << spinor_param_count(res.model) << "\n";
    if (!out_path.empty()) save_spinor_model(res.model, out_path);
  }
  if (!out_path.empty()) std::cerr << "saved model: " << out_path << "\n";
}

std::vector<std::pair<int, int>> parse_signatures(const std::string& spec) {
  std::vector<std::pair<int, int>> out;
  std::istringstream in(spec);
  std::string part;
  while (std::getline(in, part, ';')) {
    if (part.find_first_not_of(" \t") == std::string::npos) continue;
    int p = 0, q = 0;
    char comma = 0;
    std::istringstream ps(part);
    if (!(ps >> p >> comma >> q) || comma != ',' || (ps >> std::ws, !ps.eof()))
      throw ArgumentError("cannot parse signature entry \"" + part +
                          "\"; expected p,q pairs separated by ';'");
    out.push_back({p, q});
  }
  if (out.empty()) throw ArgumentError("no signatures given");
  return out;
}

void run_ablate(const std::string& corpus_path, const std::string& sig_spec,
                const TrainConfig& cfg, std::size_t max_vocab, const std::string& out_path) {
  const ToyCorpus corpus = ingest_corpus(corpus_path, max_vocab);
  const auto rows = ablate_signatures(corpus, parse_signatures(sig_spec), cfg);
  std::string csv = "signature,val_ppl,seconds\n";
  for (const AblateRow& r : rows) {
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.3f", r.seconds);
    csv += csv_field(r.signature) + "," + fmt_double(r.final_val_ppl) + "," + secs + "\n";
  }
  emit(csv, out_path);
}

std::vector<std::pair<int, int>> parse_pairs_file(const std::string& path,
                                                 const std::vector<std::string>& vocab) {
  std::map<std::string, int> ids;
  for (std::size_t i = 0; i < vocab.size(); ++i) ids[vocab[i]] = static_cast<int>(i);
  const std::string text = read_text_file(path);
  validate_utf8(text);
  std::vector<std::pair<int, int>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a)) continue;
    if (!(ls >> b) || (ls >> extra))
      throw ValidationError("pairs file " + path + " line " + std::to_string(lineno) +
                            ": expected exactly two tokens (source target)");
    for (const std::string* w : {&a, &b})
      if (!ids.count(*w))
        throw ValidationError("pairs file " + path + " line " + std::to_string(lineno) +
                              ": token \"" + *w + "\" is not in the model vocabulary");
    out.push_back({ids[a], ids[b]});
  }
  if (out.empty()) throw ValidationError("pairs file " + path + " contains no pairs");
  return out;
}

void run_analogy(const std::string& model_path, const std::string& pairs_path,
                 const std::string& holdout_path) {
  const SpinorLmModel m = load_spinor_model(model_path);
  const auto pair_ids = parse_pairs_file(pairs_path, m.table.vocab);
  std::vector<std::pair<Multivector, Multivector>> pairs;
  pairs.reserve(pair_ids.size());
  for (const auto& [src, tgt] : pair_ids)
    pairs.push_back({m.table.spinor(static_cast<std::size_t>(src)),
                     m.table.spinor(static_cast<std::size_t>(tgt))});
  const FitResult fit = fit_rotor(pairs);
  // accuracy always uses the rotor exactly as fitted; the sign-canonical
  // form is for display, and one-sided action is sign-sensitive
  const double train_acc = analogy_eval(fit.rotor, pair_ids, m.table);
  const Multivector shown = canonical_rotor(fit.rotor);
  std::cout << "pairs: " << pair_ids.size() << "\n";
  std::cout << "iterations: " << fit.loss_history.size() - 1 << "\n";
  std::cout << "final_loss: " << fmt_double(fit.final_loss) << "\n";
  std::cout << "rotor: " << to_string(shown) << "\n";
  std::cout << "rotor_coeffs: " << join_doubles(even_coords(shown)) << "\n";
  std::cout << "train_accuracy: " << fmt_double(train_acc) << "\n";
  if (!holdout_path.empty()) {
    const auto held = parse_pairs_file(holdout_path, m.table.vocab);
    std::cout << "holdout_pairs: " << held.size() << "\n";
    std::cout << "holdout_accuracy: " << fmt_double(analogy_eval(fit.rotor, held, m.table))
              << "\n";
  }
}

void run_demo720(int p, int q, int steps) {
  if (steps < 1) throw ArgumentError("steps must be at least 1");
  const Algebra alg(p, q);
  int first = -1;
  for (int i = 0; i + 1 < alg.dims(); ++i)
    if (alg.metric_sign(i) == alg.metric_sign(i + 1)) {
      first = i;
      break;
    }
  if (first < 0)
    throw ArgumentError("demo720 needs a circular rotation plane: two basis vectors with the "
                        "same metric sign (try --p 2 --q 0)");
  const Multivector plane = Multivector::basis_blade(
      alg, (BladeMask{1} << first) | (BladeMask{1} << (first + 1)));
  const Multivector psi0 = Multivector::scalar(alg, 1.0);
  const Multivector v = Multivector::basis_vector(alg, first + 1);

  auto classify = [](const Multivector& x, const Multivector& ref, const char* plus,
                     const char* minus) -> std::string {
    if (max_abs_coeff(x - ref) <= 1e-9) return plus;
    if (max_abs_coeff(x + ref) <= 1e-9) return minus;
    return "other";
  };

  std::cout << "step,angle_deg,one_sided,two_sided\n";
  for (int k = 0; k <= steps; ++k) {
    const double theta = 4.0 * std::numbers::pi * k / steps;
    const Multivector r = make_rotor(plane, theta);
    std::cout << k << "," << fmt_double(720.0 * k / steps) << ","
              << classify(apply_one_sided(r, psi0), psi0, "+psi", "-psi") << ","
              << classify(sandwich(r, v), v, "+v", "-v") << "\n";
  }
}

void run_attend(const std::string& model_path, const std::string& text,
                const std::string& out_path) {
  const SpinorLmModel m = load_spinor_model(model_path);
  std::map<std::string, int> ids;
  for (std::size_t i = 0; i < m.table.vocab.size(); ++i)
    ids[m.table.vocab[i]] = static_cast<int>(i);
  std::istringstream in(text);
  std::string word;
  std::vector<int> tokens;
  while (in >> word) {
    auto it = ids.find(word);
    if (it == ids.end()) it = ids.find("<unk>");
    if (it == ids.end())
      throw ValidationError("token \"" + word +
                            "\" is not in the model vocabulary and the model has no <unk>");
    tokens.push_back(it->second);
  }
  if (tokens.empty()) throw ArgumentError("attend needs at least one token of input text");

  const std::vector<Multivector> xs = embed_sequence(tokens, m.table, m.positional);
  const double inv = 1.0 / std::sqrt(static_cast<double>(m.alg().even_count()));
  std::string csv = "head,query,key,weight\n";
  for (std::size_t h = 0; h < m.block.attn.heads.size(); ++h) {
    const HeadParams& head = m.block.attn.heads[h];
    const Multivector rq = exp_bivector(bivector_from_coords(m.alg(), head.bq));
    const Multivector rk = exp_bivector(bivector_from_coords(m.alg(), head.bk));
    std::vector<Multivector> qs, ks;
    for (const Multivector& x : xs) {
      qs.push_back(geometric_product(rq, x));
      ks.push_back(geometric_product(rk, x));
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::vector<double> scores(xs.size());
      for (std::size_t j = 0; j < xs.size(); ++j) scores[j] = dirac_scalar(qs[i], ks[j]) * inv;
      const std::vector<double> w = softmax(scores);
      for (std::size_t j = 0; j < xs.size(); ++j)
        csv += std::to_string(h) + "," + std::to_string(i) + "," + std::to_string(j) + "," +
               fmt_double(w[j]) + "\n";
    }
  }
  emit(csv, out_path);
}

void run_project(const std::string& model_path, const std::string& out_path) {
  const SpinorLmModel m = load_spinor_model(model_path);
  const ProjectionResult res = project_embeddings(m.table);
  if (res.degenerate)
    std::cerr << "warning: all embeddings are identical; projection is rank-0 and every "
                 "coordinate is 0\n";
  std::string csv = "token,x,y\n";
  for (const ProjectionRow& r : res.rows)
    csv += csv_field(r.token) + "," + fmt_double(r.x) + "," + fmt_double(r.y) + "\n";
  write_text_file_atomic(out_path, csv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spinlm: Clifford-algebra spinor embeddings, rotor transformations, and "
               "desk-scale attention/LM experiments"};
  app.require_subcommand(1);

  int alg_p = 2, alg_q = 0;
  bool alg_table = false;
  CLI::App* algebra = app.add_subcommand("algebra", "Describe a signature Cl(p,q)");
  algebra->add_option("--p", alg_p, "basis vectors squaring to +1")->capture_default_str();
  algebra->add_option("--q", alg_q, "basis vectors squaring to -1")->capture_default_str();
  algebra->add_flag("--table", alg_table, "print the full Cayley table (n <= 5)");
  algebra->callback([&] { run_algebra(alg_p, alg_q, alg_table); });

  struct TrainArgs {
    std::string corpus, out;
    TrainConfig cfg;
    std::size_t max_vocab = 0;
  };
  auto add_train_flags = [](CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--corpus", a.corpus, "whitespace-tokenized text file")->required();
    cmd->add_option("--p", a.cfg.p, "positive-square dimensions")->capture_default_str();
    cmd->add_option("--q", a.cfg.q, "negative-square dimensions")->capture_default_str();
    cmd->add_option("--seed", a.cfg.seed, "init seed")->capture_default_str();
    cmd->add_option("--epochs", a.cfg.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--lr", a.cfg.learning_rate, "SGD step size")->capture_default_str();
    cmd->add_option("--momentum", a.cfg.momentum, "heavy-ball coefficient in [0,1)")
        ->capture_default_str();
    cmd->add_option("--batch", a.cfg.batch, "training window length")->capture_default_str();
    cmd->add_option("--heads", a.cfg.heads, "attention heads")->capture_default_str();
    cmd->add_option("--max-vocab", a.max_vocab,
                    "cap vocabulary; overflow tokens map to <unk> (0 = no cap)")
        ->capture_default_str();
    cmd->add_option("--out", a.out, "write the trained model JSON here");
  };

  TrainArgs lm_args;
  CLI::App* train = app.add_subcommand(
      "train-lm", "Train the spinor language model; per-epoch perplexity CSV on stdout");
  add_train_flags(train, lm_args);
  train->callback(
      [&] { run_train(false, lm_args.corpus, lm_args.cfg, lm_args.max_vocab, lm_args.out); });

  TrainArgs base_args;
  CLI::App* train_base = app.add_subcommand(
      "train-baseline", "Train the plain-vector baseline under the identical harness");
  add_train_flags(train_base, base_args);
  train_base->callback(
      [&] { run_train(true, base_args.corpus, base_args.cfg, base_args.max_vocab, base_args.out); });

  TrainArgs ab_args;
  std::string ab_sigs = "2,0;3,0;0,3";
  std::string ab_out;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "Train one spinor LM per signature and report validation perplexity");
  ablate->add_option("--corpus", ab_args.corpus, "whitespace-tokenized text file")->required();
  ablate->add_option("--signatures", ab_sigs, "p,q pairs separated by ';'")
      ->capture_default_str();
  ablate->add_option("--seed", ab_args.cfg.seed, "init seed")->capture_default_str();
  ablate->add_option("--epochs", ab_args.cfg.epochs, "training epochs")->capture_default_str();
  ablate->add_option("--lr", ab_args.cfg.learning_rate, "SGD step size")->capture_default_str();
  ablate->add_option("--momentum", ab_args.cfg.momentum, "heavy-ball coefficient in [0,1)")
      ->capture_default_str();
  ablate->add_option("--batch", ab_args.cfg.batch, "training window length")
      ->capture_default_str();
  ablate->add_option("--heads", ab_args.cfg.heads, "attention heads")->capture_default_str();
  ablate->add_option("--max-vocab", ab_args.max_vocab, "vocabulary cap (0 = none)")
      ->capture_default_str();
  ablate->add_option("--out", ab_out, "also write the report CSV here");
  ablate->callback(
      [&] { run_ablate(ab_args.corpus, ab_sigs, ab_args.cfg, ab_args.max_vocab, ab_out); });

  std::string an_model, an_pairs, an_holdout;
  CLI::App* analogy = app.add_subcommand(
      "analogy", "Fit a rotor to (source, target) token pairs and rank the vocabulary");
  analogy->add_option("--model", an_model, "spinor model JSON")->required();
  analogy->add_option("--pairs", an_pairs, "file with two tokens per line: source target")
      ->required();
  analogy->add_option("--holdout", an_holdout, "held-out pairs for top-1 accuracy");
  analogy->callback([&] { run_analogy(an_model, an_pairs, an_holdout); });

  int demo_p = 2, demo_q = 0, demo_steps = 8;
  CLI::App* demo = app.add_subcommand(
      "demo720", "Walk a rotor through 720 degrees; spinors return only after the full turn");
  demo->add_option("--p", demo_p, "positive-square dimensions")->capture_default_str();
  demo->add_option("--q", demo_q, "negative-square dimensions")->capture_default_str();
  demo->add_option("--steps", demo_steps, "rows spanning 0..720 degrees")->capture_default_str();
  demo->callback([&] { run_demo720(demo_p, demo_q, demo_steps); });

  std::string at_model, at_text, at_out;
  CLI::App* attend = app.add_subcommand("attend",
                                        "Attention weight matrix for one whitespace-split text");
  attend->add_option("--model", at_model, "spinor model JSON")->required();
  attend->add_option("--text", at_text, "input sequence")->required();
  attend->add_option("--out", at_out, "write CSV here instead of stdout");
  attend->callback([&] { run_attend(at_model, at_text, at_out); });

  std::string pr_model, pr_out;
  CLI::App* project = app.add_subcommand("project",
                                         "PCA of token embeddings to 2 components, CSV output");
  project->add_option("--model", pr_model, "spinor model JSON")->required();
  project->add_option("--out", pr_out, "output CSV path")->required();
  project->callback([&] { run_project(pr_model, pr_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const spinlm::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const spinlm::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const spinlm::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
