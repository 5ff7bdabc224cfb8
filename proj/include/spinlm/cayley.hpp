#pragma once

#include <algorithm>
#include <string>

#include "spinlm/algebra.hpp"
#include "spinlm/errors.hpp"

namespace spinlm {

/// Full multiplication table in canonical blade order. Each cell is the
/// signed blade name of the product of its row and column blades, e.g.
/// "-e13". Rows and columns carry the same order, so cell (i, j) is
/// blade_i * blade_j.
inline std::string dump_cayley_table(const Algebra& alg) {
  if (alg.dims() > 5)
    throw ArgumentError("Cayley table limited to n <= 5: the table has 2^n x 2^n cells and "
                        "larger signatures produce unreadable output");
  const std::vector<BladeMask> blades = alg.canonical_blades();
  std::size_t name_w = 1;
  for (BladeMask b : blades) name_w = std::max(name_w, alg.blade_name(b).size());
  const std::size_t cell_w = name_w + 1;
  auto pad = [](const std::string& s, std::size_t w) {
    return std::string(w - std::min(w, s.size()), ' ') + s;
  };
  std::string out = "Cayley table for " + alg.name() + "\n\n";
  out += pad("", name_w) + " |";
  for (BladeMask b : blades) out += " " + pad(alg.blade_name(b), cell_w);
  out += "\n";
  for (BladeMask row : blades) {
    out += pad(alg.blade_name(row), name_w) + " |";
    for (BladeMask col : blades) {
      const SignedBlade r = alg.blade_product(row, col);
      out += " " + pad((r.sign < 0 ? "-" : "+") + alg.blade_name(r.blade), cell_w);
    }
    out += "\n";
  }
  return out;
}

}  // namespace spinlm
