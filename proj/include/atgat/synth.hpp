// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "atgat/graph_data.hpp"

namespace atgat {

struct SynthConfig {
  std::size_t n_nodes = 2000;
  std::size_t n_time_steps = 49;
  double fraud_ratio = 0.02;
  std::size_t feature_dim = 16;
  std::size_t attach_degree = 3;
  /// Fraud nodes only attach to older nodes at most this many steps earlier.
  std::size_t fraud_burst_delta = 1;
  /// Mean offset added to fraud nodes on a fixed subset of feature_dim / 4 features.
  double feature_shift = 0.75;
  std::uint64_t seed = 0;

  std::size_t fraud_count() const;
  void validate() const;
};

struct SynthGraph {
  TransactionGraph graph;
  std::vector<std::size_t> fraud_nodes;    // ascending
  std::vector<std::size_t> shifted_features;
  /// Indices into graph.edges() of edges created when a fraud node arrived.
  std::vector<std::size_t> fraud_edges;
};

/// Nodes arrive in order k = 0..n-1 at timestamp 1 + floor(k T / n). Each new
/// node receives up to attach_degree edges from distinct older nodes drawn
/// with probability proportional to (degree + 1), directed old -> new. Fraud
/// nodes draw only from older nodes inside the burst window and carry the
/// feature shift. Features are otherwise standard normal.
SynthGraph generate_synthetic(const SynthConfig& config);

}  // namespace atgat
