#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <utility>
#include <vector>

#include "spinlm/algebra.hpp"

namespace testsupport {

struct CliResult {
  int exit_code;
  std::string out;
};

/// Run the built command-line binary with stderr discarded, capturing
/// stdout and the process exit code.
inline CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(SPINLM_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

inline std::string scratch_dir() {
  static const std::string dir = [] {
    char tmpl[] = "/tmp/spinlm_test_XXXXXX";
    const char* d = mkdtemp(tmpl);
    return std::string(d ? d : "/tmp");
  }();
  return dir;
}

inline std::string write_scratch(const std::string& name, const std::string& content) {
  const std::string path = scratch_dir() + "/" + name;
  std::ofstream f(path, std::ios::binary);
  f << content;
  return path;
}

inline std::string data_path(const std::string& name) {
  return std::string(SPINLM_DATA_DIR) + "/" + name;
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

/// Split one CSV record, honoring double-quoted fields (a quoted field may
/// contain commas; "" inside quotes is a literal quote).
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string f;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          f += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        f += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(f);
      f.clear();
    } else {
      f += c;
    }
  }
  fields.push_back(f);
  return fields;
}

/// Parse the text produced by dump_cayley_table back into (sign, mask)
/// cells so it can be compared against blade_product directly.
struct CayleyCell {
  int sign;
  spinlm::BladeMask blade;
};

inline std::vector<std::vector<CayleyCell>> parse_cayley(const std::string& text,
                                                         const spinlm::Algebra& alg) {
  std::vector<std::string> names;
  for (spinlm::BladeMask b : alg.canonical_blades()) names.push_back(alg.blade_name(b));
  auto mask_of = [&](const std::string& name) -> spinlm::BladeMask {
    const auto blades = alg.canonical_blades();
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return blades[i];
    throw std::runtime_error("unknown blade name in table: " + name);
  };

  std::vector<std::vector<CayleyCell>> rows;
  for (const std::string& line : split_lines(text)) {
    const std::size_t bar = line.find('|');
    if (bar == std::string::npos) continue;
    std::istringstream cells(line.substr(bar + 1));
    std::string cell;
    std::vector<CayleyCell> row;
    while (cells >> cell) {
      if (cell[0] != '+' && cell[0] != '-') continue;  // header row has bare names
      row.push_back({cell[0] == '-' ? -1 : 1, mask_of(cell.substr(1))});
    }
    if (!row.empty()) rows.push_back(row);
  }
  return rows;
}

}  // namespace testsupport
