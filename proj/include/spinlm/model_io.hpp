#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spinlm/errors.hpp"
#include "spinlm/train.hpp"

namespace spinlm {

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path + " for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Write via a temporary file and rename, so a crash never leaves a
/// half-written output at the destination.
inline void write_text_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot open " + tmp + " for writing");
    out << content;
    out.flush();
    if (!out) throw ArgumentError("failed while writing " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ArgumentError("cannot rename " + tmp + " to " + path);
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Structural UTF-8 check covering continuation patterns, overlong forms,
/// surrogates, and the U+10FFFF ceiling.
inline void validate_utf8(const std::string& text) {
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  auto fail = [&](std::size_t at) {
    throw ValidationError("input is not valid UTF-8 (byte offset " + std::to_string(at) + ")");
  };
  while (i < n) {
    const unsigned char c = s[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    int extra;
    unsigned long cp;
    if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      fail(i);
      return;
    }
    if (i + static_cast<std::size_t>(extra) >= n) fail(i);
    for (int k = 1; k <= extra; ++k) {
      if ((s[i + static_cast<std::size_t>(k)] & 0xC0) != 0x80) fail(i);
      cp = (cp << 6) | (s[i + static_cast<std::size_t>(k)] & 0x3F);
    }
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000))
      fail(i);
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail(i);
    i += static_cast<std::size_t>(extra) + 1;
  }
}

/// Whitespace tokenization, vocabulary in first-appearance order. With a
/// max_vocab cap, tokens past the cap map to "<unk>", which is appended to
/// the vocabulary the first time it is needed. Split is 90/10 on token
/// index, boundary rounded down.
inline ToyCorpus ingest_corpus(const std::string& path, std::size_t max_vocab = 0) {
  const std::string text = read_text_file(path);
  validate_utf8(text);
  ToyCorpus corpus;
  std::istringstream in(text);
  std::string word;
  std::vector<std::string> order;
  // first-appearance index; -1 marks a token that fell past the cap
  auto find = [&](const std::string& w) -> int {
    for (std::size_t k = 0; k < corpus.vocab.size(); ++k)
      if (corpus.vocab[k] == w) return static_cast<int>(k);
    return -1;
  };
  int unk = -1;
  while (in >> word) {
    int id = find(word);
    if (id < 0) {
      if (max_vocab == 0 || corpus.vocab.size() < max_vocab) {
        corpus.vocab.push_back(word);
        id = static_cast<int>(corpus.vocab.size()) - 1;
      } else {
        if (unk < 0) {
          corpus.vocab.push_back("<unk>");
          unk = static_cast<int>(corpus.vocab.size()) - 1;
        }
        id = unk;
      }
    }
    corpus.tokens.push_back(id);
  }
  if (corpus.tokens.empty()) throw ArgumentError("corpus file " + path + " contains no tokens");
  corpus.split = corpus.tokens.size() * 9 / 10;
  return corpus;
}

// --- model persistence ---------------------------------------------------
//
// One JSON schema serves both model families, discriminated by "kind":
// "spinor-lm" stores bivector generators and rotor-map heads, "vector-lm"
// stores plain embedding vectors and diagonal map weights in the same
// slots. All real arrays use the canonical bivector order (e12, e13, e23,
// e14, ...) or, for feed-forward arrays, the canonical even-blade order.

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kSpinorKind = "spinor-lm";
inline constexpr const char* kVectorKind = "vector-lm";

namespace detail {

inline nlohmann::json positional_json(const std::vector<std::vector<double>>& planes, double base,
                                      double decay) {
  return nlohmann::json{
      {"planes", planes}, {"base_frequency", base}, {"frequency_decay", decay}};
}

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

inline void save_spinor_model(const SpinorLmModel& m, const std::string& path) {
  m.table.validate();
  m.block.validate(m.alg());
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = kSpinorKind;
  j["signature"] = {{"p", m.alg().p()}, {"q", m.alg().q()}};
  j["vocab"] = m.table.vocab;
  j["generators"] = m.table.generators;
  std::vector<std::vector<double>> planes;
  planes.reserve(m.positional.planes.size());
  for (const Multivector& pl : m.positional.planes) planes.push_back(bivector_coords(pl));
  j["positional"] = detail::positional_json(planes, m.positional.base_frequency,
                                            m.positional.frequency_decay);
  nlohmann::json heads = nlohmann::json::array();
  for (const HeadParams& h : m.block.attn.heads)
    heads.push_back({{"bq", h.bq}, {"bk", h.bk}, {"bv", h.bv}});
  j["attention"] = {{"heads", heads},
                    {"ffw",
                     {{"w1", m.block.ffw.w1},
                      {"b1", m.block.ffw.b1},
                      {"w2", m.block.ffw.w2},
                      {"b2", m.block.ffw.b2}}}};
  j["metadata"] = {{"seed", m.seed}, {"epochs", m.epochs_trained}};
  write_text_file_atomic(path, j.dump(2) + "\n");
}

inline void save_baseline_model(const BaselineLmModel& m, const std::string& path) {
  m.validate();
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = kVectorKind;
  j["signature"] = {{"p", m.alg.p()}, {"q", m.alg.q()}};
  j["vocab"] = m.vocab;
  j["generators"] = m.embeddings;
  j["positional"] = detail::positional_json({}, m.base_frequency, m.frequency_decay);
  j["attention"] = {{"heads", {{{"bq", m.wq}, {"bk", m.wk}, {"bv", m.wv}}}},
                    {"ffw", {{"w1", m.w1}, {"b1", m.b1}, {"w2", m.w2}, {"b2", m.b2}}}};
  j["metadata"] = {{"seed", m.seed}, {"epochs", m.epochs_trained}};
  write_text_file_atomic(path, j.dump(2) + "\n");
}

struct LoadedModel {
  std::string kind;
  std::optional<SpinorLmModel> spinor;
  std::optional<BaselineLmModel> baseline;
};

inline LoadedModel load_model(const std::string& path) {
  const std::string text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("model file " + path + ": parse error at line " +
                          std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw ValidationError("model file " + path + ": unsupported format_version " +
                            std::to_string(version) + " (this build reads version " +
                            std::to_string(kModelFormatVersion) + ")");
    const std::string kind = j.at("kind").get<std::string>();
    const int p = j.at("signature").at("p").get<int>();
    const int q = j.at("signature").at("q").get<int>();
    const Algebra alg(p, q);
    const std::size_t nb = alg.bivector_count();
    const auto vocab = j.at("vocab").get<std::vector<std::string>>();
    const auto generators = j.at("generators").get<std::vector<std::vector<double>>>();
    if (generators.size() != vocab.size())
      throw ValidationError("model file " + path + ": " + std::to_string(generators.size()) +
                            " generator arrays for " + std::to_string(vocab.size()) + " tokens");
    for (std::size_t t = 0; t < generators.size(); ++t)
      if (generators[t].size() != nb)
        throw ValidationError("model file " + path + ": generator array for token \"" + vocab[t] +
                              "\" has length " + std::to_string(generators[t].size()) +
                              ", expected " + std::to_string(nb));
    const auto& jp = j.at("positional");
    const auto plane_coords = jp.at("planes").get<std::vector<std::vector<double>>>();
    const double base = jp.at("base_frequency").get<double>();
    const double decay = jp.at("frequency_decay").get<double>();
    const auto& ja = j.at("attention");
    const auto& jh = ja.at("heads");
    if (!jh.is_array() || jh.empty())
      throw ValidationError("model file " + path + ": attention must define at least one head");
    const auto& jf = ja.at("ffw");
    const std::uint64_t seed = j.at("metadata").at("seed").get<std::uint64_t>();
    const int epochs = j.at("metadata").at("epochs").get<int>();

    LoadedModel out;
    out.kind = kind;
    if (kind == kSpinorKind) {
      SpinorLmModel m{EmbeddingTable{alg, vocab, generators}, PositionalConfig{}, BlockParams{},
                      seed, epochs};
      for (const auto& pc : plane_coords)
        m.positional.planes.push_back(bivector_from_coords(alg, pc));
      m.positional.base_frequency = base;
      m.positional.frequency_decay = decay;
      for (const auto& h : jh)
        m.block.attn.heads.push_back({h.at("bq").get<std::vector<double>>(),
                                      h.at("bk").get<std::vector<double>>(),
                                      h.at("bv").get<std::vector<double>>()});
      m.block.ffw.w1 = jf.at("w1").get<std::vector<double>>();
      m.block.ffw.b1 = jf.at("b1").get<std::vector<double>>();
      m.block.ffw.w2 = jf.at("w2").get<std::vector<double>>();
      m.block.ffw.b2 = jf.at("b2").get<std::vector<double>>();
      m.table.validate();
      m.block.validate(alg);
      m.positional.validate();
      out.spinor = std::move(m);
    } else if (kind == kVectorKind) {
      if (jh.size() != 1)
        throw ValidationError("model file " + path + ": vector-lm models have exactly one head");
      BaselineLmModel m{alg,
                        vocab,
                        generators,
                        jh.at(0).at("bq").get<std::vector<double>>(),
                        jh.at(0).at("bk").get<std::vector<double>>(),
                        jh.at(0).at("bv").get<std::vector<double>>(),
                        jf.at("w1").get<std::vector<double>>(),
                        jf.at("b1").get<std::vector<double>>(),
                        jf.at("w2").get<std::vector<double>>(),
                        jf.at("b2").get<std::vector<double>>(),
                        base,
                        decay,
                        seed,
                        epochs};
      m.validate();
      out.baseline = std::move(m);
    } else {
      throw ValidationError("model file " + path + ": unknown kind \"" + kind + "\"");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("model file " + path + ": invalid schema: " + e.what());
  } catch (const ArgumentError& e) {
    throw ValidationError("model file " + path + ": " + std::string(e.what()));
  }
}

inline SpinorLmModel load_spinor_model(const std::string& path) {
  LoadedModel m = load_model(path);
  if (!m.spinor)
    throw ValidationError("model file " + path + " holds a " + m.kind +
                          " model; a spinor-lm model is required here");
  return std::move(*m.spinor);
}

inline BaselineLmModel load_baseline_model(const std::string& path) {
  LoadedModel m = load_model(path);
  if (!m.baseline)
    throw ValidationError("model file " + path + " holds a " + m.kind +
                          " model; a vector-lm model is required here");
  return std::move(*m.baseline);
}

}  // namespace spinlm
