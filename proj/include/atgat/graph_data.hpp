// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "atgat/matrix.hpp"

namespace atgat {

using Index = std::vector<std::size_t>;

enum class Label : std::int8_t { licit = 0, illicit = 1, unknown = -1 };

inline bool is_labeled(Label l) { return l != Label::unknown; }

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Compressed per-node edge lists. edges_of(v) yields edge indices in
/// ascending order.
struct Adjacency {
  std::vector<std::size_t> offsets;  // size N + 1
  std::vector<std::size_t> edge_ids;

  std::span<const std::size_t> edges_of(std::size_t node) const {
    return {edge_ids.data() + offsets[node], offsets[node + 1] - offsets[node]};
  }
};

/// Ingestion failure; the message names the file and line where possible.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Directed temporal transaction graph. Immutable once constructed; the
/// constructor validates every invariant and builds both adjacency indexes.
class TransactionGraph {
 public:
  TransactionGraph() = default;
  TransactionGraph(std::vector<std::string> node_ids, Matrix features,
                   std::vector<std::int64_t> timestamps, std::vector<Label> labels,
                   std::vector<Edge> edges);

  std::size_t num_nodes() const { return node_ids_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t feature_dim() const { return features_.cols; }

  const std::vector<std::string>& node_ids() const { return node_ids_; }
  const Matrix& features() const { return features_; }
  const std::vector<std::int64_t>& timestamps() const { return timestamps_; }
  const std::vector<Label>& labels() const { return labels_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Adjacency& in_adjacency() const { return in_adj_; }
  const Adjacency& out_adjacency() const { return out_adj_; }

  std::int64_t max_timestamp() const;
  std::size_t count_label(Label l) const;
  /// Indices of nodes with a known label, ascending.
  Index labeled_nodes() const;

  /// Same structure with a replaced feature matrix (row count must match).
  TransactionGraph with_features(Matrix features) const;

  /// True when both adjacency indexes reproduce the edge list exactly.
  bool adjacency_round_trips() const;

  friend bool operator==(const TransactionGraph& a, const TransactionGraph& b) {
    return a.node_ids_ == b.node_ids_ && a.features_ == b.features_ &&
           a.timestamps_ == b.timestamps_ && a.labels_ == b.labels_ && a.edges_ == b.edges_;
  }

 private:
  std::vector<std::string> node_ids_;
  Matrix features_;
  std::vector<std::int64_t> timestamps_;
  std::vector<Label> labels_;
  std::vector<Edge> edges_;
  Adjacency in_adj_;
  Adjacency out_adj_;
};

struct LoadOptions {
  char delimiter = ',';
  /// Class tokens; anything else maps to unknown. Defaults follow the
  /// Elliptic convention ("1" illicit, "2" licit, "unknown"/"3" unlabeled).
  std::string illicit_token = "1";
  std::string licit_token = "2";
  /// Subset of feature columns (0-based, after id and time step). Empty keeps all.
  std::vector<std::size_t> feature_columns;
};

/// Features file rows: id, time step, d features. Classes rows: id, token.
/// Edges rows: src id, dst id (src sends funds to dst). A first row whose
/// leading field is not numeric is treated as a header.
TransactionGraph load_graph(const std::filesystem::path& features_path,
                            const std::filesystem::path& classes_path,
                            const std::filesystem::path& edges_path,
                            const LoadOptions& options = {});

/// Writes the three-file format. Values use shortest round-trip formatting,
/// so load(save(g)) == g bit for bit.
void save_graph(const TransactionGraph& graph, const std::filesystem::path& features_path,
                const std::filesystem::path& classes_path, const std::filesystem::path& edges_path,
                const LoadOptions& options = {});

/// Restricts to labeled nodes (original relative order); keeps edges whose
/// endpoints are both labeled.
TransactionGraph induced_labeled_subgraph(const TransactionGraph& graph);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double held = 0.1;
};

struct SplitAssignment {
  Index train;
  Index val;
  /// Materialized, never read by training or model selection.
  Index held;
  std::uint64_t seed = 0;
};

/// Uniform shuffle of the labeled nodes; sizes floor(train*n), floor(val*n),
/// remainder. With `stratified`, each class is split separately by the same
/// rule and the parts are concatenated.
SplitAssignment split_nodes(const TransactionGraph& graph, const SplitRatios& ratios,
                            std::uint64_t seed, bool stratified = false);

/// |t_src - t_dst| for the given edge.
std::int64_t edge_time_delta(const TransactionGraph& graph, std::size_t edge);

/// Per-column standardization with mean/std fitted on `fit_rows` only.
/// Zero-variance columns are centered but not scaled.
Matrix standardize_features(const Matrix& features, const Index& fit_rows);

}  // namespace atgat
