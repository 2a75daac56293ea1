// SPDX-License-Identifier: Apache-2.0
#include "atgat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "atgat/rng.hpp"

namespace atgat {

std::size_t SynthConfig::fraud_count() const {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n_nodes) * fraud_ratio + 0.5));
}

void SynthConfig::validate() const {
  if (n_nodes < 10) throw std::invalid_argument("synth: n_nodes must be >= 10");
  if (n_time_steps < 1) throw std::invalid_argument("synth: n_time_steps must be >= 1");
  if (!(fraud_ratio > 0.0 && fraud_ratio < 0.5))
    throw std::invalid_argument("synth: fraud_ratio must lie in (0, 0.5)");
  if (feature_dim < 1) throw std::invalid_argument("synth: feature_dim must be >= 1");
  if (attach_degree < 1) throw std::invalid_argument("synth: attach_degree must be >= 1");
  if (!std::isfinite(feature_shift)) throw std::invalid_argument("synth: feature_shift must be finite");
  if (fraud_count() == 0) throw std::invalid_argument("synth: fraud_ratio * n_nodes rounds to 0 fraud nodes");
  if (fraud_count() > n_nodes - attach_degree - 1)
    throw std::invalid_argument("synth: too many fraud nodes for the graph size");
}

SynthGraph generate_synthetic(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.n_nodes;
  const std::size_t d = config.feature_dim;

  std::vector<std::int64_t> timestamps(n);
  for (std::size_t k = 0; k < n; ++k)
    timestamps[k] = 1 + static_cast<std::int64_t>((k * config.n_time_steps) / n);

  SynthGraph out;
  {
    // Early nodes have too few predecessors to receive a full set of edges.
    std::vector<std::size_t> eligible(n - config.attach_degree - 1);
    std::iota(eligible.begin(), eligible.end(), config.attach_degree + 1);
    Rng rng(config.seed, "synth.fraud");
    rng.shuffle(std::span<std::size_t>(eligible));
    out.fraud_nodes.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(config.fraud_count()));
    std::sort(out.fraud_nodes.begin(), out.fraud_nodes.end());
  }
  std::vector<bool> is_fraud(n, false);
  for (std::size_t v : out.fraud_nodes) is_fraud[v] = true;

  {
    std::vector<std::size_t> dims(d);
    std::iota(dims.begin(), dims.end(), 0);
    Rng rng(config.seed, "synth.shift");
    rng.shuffle(std::span<std::size_t>(dims));
    out.shifted_features.assign(dims.begin(), dims.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, d / 4)));
    std::sort(out.shifted_features.begin(), out.shifted_features.end());
  }

  Matrix features(n, d);
  {
    Rng rng(config.seed, "synth.features");
    for (double& x : features.data) x = rng.normal();
    for (std::size_t v : out.fraud_nodes)
      for (std::size_t j : out.shifted_features) features(v, j) += config.feature_shift;
  }

  std::vector<Edge> edges;
  std::vector<double> degree(n, 0.0);
  Rng rng(config.seed, "synth.edges");
  std::vector<std::size_t> pool;
  std::vector<double> weights;
  for (std::size_t k = 1; k < n; ++k) {
    std::size_t first = 0;
    if (is_fraud[k]) {
      const std::int64_t earliest = timestamps[k] - static_cast<std::int64_t>(config.fraud_burst_delta);
      first = static_cast<std::size_t>(
          std::lower_bound(timestamps.begin(), timestamps.begin() + static_cast<std::ptrdiff_t>(k), earliest) -
          timestamps.begin());
    }
    pool.resize(k - first);
    std::iota(pool.begin(), pool.end(), first);
    weights.resize(pool.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) total += (weights[i] = degree[pool[i]] + 1.0);

    const std::size_t picks = std::min(config.attach_degree, pool.size());
    for (std::size_t p = 0; p < picks; ++p) {
      double r = rng.uniform() * total;
      std::size_t i = 0;
      while (i + 1 < pool.size() && r >= weights[i]) r -= weights[i++];
      const std::size_t src = pool[i];
      total -= weights[i];
      pool[i] = pool.back();
      weights[i] = weights.back();
      pool.pop_back();
      weights.pop_back();
      if (is_fraud[k]) out.fraud_edges.push_back(edges.size());
      edges.push_back({src, k});
      degree[src] += 1.0;
      degree[k] += 1.0;
    }
  }

  std::vector<std::string> ids(n);
  std::vector<Label> labels(n);
  for (std::size_t k = 0; k < n; ++k) {
    ids[k] = std::to_string(k + 1);
    labels[k] = is_fraud[k] ? Label::illicit : Label::licit;
  }
  out.graph = TransactionGraph(std::move(ids), std::move(features), std::move(timestamps), std::move(labels),
                               std::move(edges));
  return out;
}

}  // namespace atgat
