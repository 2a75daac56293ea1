// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the unit tests and the acceptance binary.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "atgat/graph_data.hpp"
#include "atgat/matrix.hpp"
#include "atgat/rng.hpp"

namespace atgat::fixtures {

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

// Random directed graph without self-loops or duplicate edges. Every node is
// labeled; the first node is illicit so both classes are present.
inline TransactionGraph random_graph(Rng& rng, std::size_t n, std::size_t max_edges,
                                     std::size_t d = 4, std::int64_t steps = 10) {
  std::vector<std::string> ids;
  std::vector<std::int64_t> ts;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("n" + std::to_string(i));
    ts.push_back(1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(steps))));
    labels.push_back(i == 0 || rng.uniform() < 0.3 ? Label::illicit : Label::licit);
  }
  if (n > 1) labels[1] = Label::licit;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<Edge> edges;
  if (n > 1) {
    for (std::size_t k = 0; k < max_edges; ++k) {
      const std::size_t s = rng.below(n), t = rng.below(n);
      if (s == t || !seen.insert({s, t}).second) continue;
      edges.push_back({s, t});
    }
  }
  return TransactionGraph(std::move(ids), random_matrix(rng, n, d), std::move(ts), std::move(labels),
                          std::move(edges));
}

// O(P*N) pairwise statistic.
inline double brute_force_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Largest |sum - 1| over groups of rows sharing a segment id, per column.
inline double max_segment_sum_error(const Matrix& alpha, const std::vector<std::size_t>& segment,
                                    std::size_t num_segments) {
  Matrix sums(num_segments, alpha.cols);
  std::vector<bool> used(num_segments, false);
  for (std::size_t r = 0; r < alpha.rows; ++r) {
    used[segment[r]] = true;
    for (std::size_t c = 0; c < alpha.cols; ++c) sums(segment[r], c) += alpha(r, c);
  }
  double worst = 0.0;
  for (std::size_t s = 0; s < num_segments; ++s)
    if (used[s])
      for (std::size_t c = 0; c < alpha.cols; ++c) worst = std::max(worst, std::abs(sums(s, c) - 1.0));
  return worst;
}

// Largest |row sum - 1|.
inline double max_row_sum_error(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) s += m(r, c);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

inline double min_entry(const Matrix& m) { return *std::min_element(m.data.begin(), m.data.end()); }

}  // namespace atgat::fixtures
