#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "spinlm/attention.hpp"
#include "spinlm/errors.hpp"

namespace spinlm {

struct ProjectionRow {
  std::string token;
  double x;
  double y;
};

struct ProjectionResult {
  std::vector<ProjectionRow> rows;
  std::vector<double> eigenvalues;
  bool degenerate = false;
};

namespace detail {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major).
/// On return the diagonal of a holds eigenvalues and column i of v the
/// matching eigenvector.
inline void jacobi_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& v) {
  v.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 128; ++sweep) {
    double off = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        total += a[i * n + j] * a[i * n + j];
        if (i < j) off += a[i * n + j] * a[i * n + j];
      }
    if (off <= total * 1e-28 || off < 1e-300) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
}

}  // namespace detail

/// PCA of the vocabulary's even-blade coordinate vectors: mean-center,
/// eigendecompose the covariance, project onto the top two components.
/// Component sign is fixed by making the largest-magnitude loading
/// positive (first such index on ties). Identical embeddings have zero
/// variance; that case returns all-zero coordinates with degenerate set.
inline ProjectionResult project_embeddings(const EmbeddingTable& table) {
  table.validate();
  const std::size_t count = table.size();
  if (count < 2) throw ArgumentError("projection requires a vocabulary of at least 2 tokens");
  const std::size_t d = table.alg.even_count();

  std::vector<std::vector<double>> x(count);
  for (std::size_t t = 0; t < count; ++t) x[t] = even_coords(table.spinor(t));
  std::vector<double> mean(d, 0.0);
  for (const auto& row : x)
    for (std::size_t k = 0; k < d; ++k) mean[k] += row[k];
  for (double& m : mean) m /= static_cast<double>(count);
  double total_var = 0.0;
  for (auto& row : x)
    for (std::size_t k = 0; k < d; ++k) {
      row[k] -= mean[k];
      total_var += row[k] * row[k];
    }
  total_var /= static_cast<double>(count);

  ProjectionResult out;
  out.rows.reserve(count);
  if (total_var <= 1e-24) {
    out.degenerate = true;
    out.eigenvalues.assign(d, 0.0);
    for (std::size_t t = 0; t < count; ++t) out.rows.push_back({table.vocab[t], 0.0, 0.0});
    return out;
  }

  std::vector<double> cov(d * d, 0.0);
  for (const auto& row : x)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += row[i] * row[j];
  for (double& c : cov) c /= static_cast<double>(count);

  std::vector<double> vecs;
  detail::jacobi_eigen(cov, d, vecs);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return cov[i * d + i] > cov[j * d + j]; });
  out.eigenvalues.reserve(d);
  for (std::size_t i : order) out.eigenvalues.push_back(cov[i * d + i]);

  auto component = [&](std::size_t rank) {
    std::vector<double> comp(d);
    for (std::size_t k = 0; k < d; ++k) comp[k] = vecs[k * d + order[rank]];
    std::size_t lead = 0;
    for (std::size_t k = 1; k < d; ++k)
      if (std::abs(comp[k]) > std::abs(comp[lead])) lead = k;
    if (comp[lead] < 0.0)
      for (double& c : comp) c = -c;
    return comp;
  };
  const std::vector<double> c1 = component(0);
  const std::vector<double> c2 = d >= 2 ? component(1) : std::vector<double>(d, 0.0);

  for (std::size_t t = 0; t < count; ++t) {
    double px = 0.0, py = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      px += x[t][k] * c1[k];
      py += x[t][k] * c2[k];
    }
    if (!std::isfinite(px) || !std::isfinite(py))
      throw NumericError("projection produced a non-finite coordinate");
    out.rows.push_back({table.vocab[t], px, py});
  }
  return out;
}

}  // namespace spinlm
