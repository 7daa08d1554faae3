#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "pnat/core/functional.hpp"
#include "pnat/core/tensor.hpp"
#include "pnat/position/permutation.hpp"

namespace pnat {

/// Square matrix of similarities; sim(i, j) relates slot i to target j.
using SimilarityMatrix = Tensor<double>;

struct SimilarityStats {
  std::size_t degenerate = 0;  // cosine evaluations with a zero-norm operand
};

/// sim[i][j] = cosine(d_i, embedding[target_ids[j]]).
template <std::floating_point T>
SimilarityMatrix similarity_matrix(const Tensor<T>& decoder_inputs, std::span<const int> target_ids,
                                   const Tensor<T>& target_embedding, SimilarityStats* stats = nullptr) {
  const std::size_t m = decoder_inputs.rows();
  if (target_ids.size() != m) throw ShapeError("similarity_matrix: need as many targets as decoder inputs");
  if (target_embedding.cols() != decoder_inputs.cols()) throw ShapeError("similarity_matrix: width mismatch");
  auto sim = SimilarityMatrix::matrix(m, m);
  for (std::size_t j = 0; j < m; ++j) {
    const int id = target_ids[j];
    if (id < 0 || static_cast<std::size_t>(id) >= target_embedding.rows()) {
      throw DataError("similarity_matrix: target id out of range");
    }
    auto y = target_embedding.row(static_cast<std::size_t>(id));
    for (std::size_t i = 0; i < m; ++i) {
      bool degenerate = false;
      sim(i, j) = static_cast<double>(cosine_similarity<T>(decoder_inputs.row(i), y, &degenerate));
      if (degenerate && stats) ++stats->degenerate;
    }
  }
  return sim;
}

/// sum_i sim(i, z[i]), accumulated in slot order.
inline double assignment_score(const SimilarityMatrix& sim, const Permutation& z) {
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += sim(i, static_cast<std::size_t>(z[i]));
  return s;
}

/// Heuristic search for positions: repeatedly take the largest remaining
/// entry (i, j), fix z[i] = j, and drop row i and column j. O(M^3).
/// Ties go to the lowest row, then the lowest column.
inline Permutation hsp(const SimilarityMatrix& sim) {
  const std::size_t m = sim.rows();
  if (sim.cols() != m) throw ShapeError("hsp: similarity matrix must be square");
  std::vector<char> row_used(m, 0), col_used(m, 0);
  std::vector<int> z(m, -1);
  for (std::size_t step = 0; step < m; ++step) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t bi = m, bj = m;
    for (std::size_t i = 0; i < m; ++i) {
      if (row_used[i]) continue;
      for (std::size_t j = 0; j < m; ++j) {
        if (col_used[j]) continue;
        if (bi == m || sim(i, j) > best) {
          best = sim(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    row_used[bi] = col_used[bj] = 1;
    z[bi] = static_cast<int>(bj);
  }
  return Permutation(std::move(z));
}

/// Exact maximum-score assignment (Hungarian / Kuhn-Munkres, O(M^3)).
inline Permutation optimal_assignment(const SimilarityMatrix& sim) {
  const std::size_t n = sim.rows();
  if (sim.cols() != n) throw ShapeError("optimal_assignment: matrix must be square");
  if (n == 0) return Permutation{};
  // Minimize cost = -sim with 1-based potentials.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -sim(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> z(n);
  for (std::size_t j = 1; j <= n; ++j) z[p[j] - 1] = static_cast<int>(j - 1);
  return Permutation(std::move(z));
}

/// Exhaustive search over all M! permutations (test oracle, M <= 10).
inline Permutation brute_force_assignment(const SimilarityMatrix& sim) {
  const std::size_t m = sim.rows();
  if (sim.cols() != m) throw ShapeError("brute_force_assignment: matrix must be square");
  if (m > 10) throw ShapeError("brute_force_assignment: M too large");
  std::vector<int> z(m);
  std::iota(z.begin(), z.end(), 0);
  std::vector<int> best = z;
  double best_score = -std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += sim(i, static_cast<std::size_t>(z[i]));
    if (s > best_score) {
      best_score = s;
      best = z;
    }
  } while (std::next_permutation(z.begin(), z.end()));
  return Permutation(std::move(best));
}

}  // namespace pnat
