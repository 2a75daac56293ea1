// SPDX-License-Identifier: Apache-2.0
#include "atgat/graph_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <string_view>
#include <unordered_map>

#include "atgat/rng.hpp"

namespace atgat {

namespace {

Adjacency build_adjacency(std::size_t n, const std::vector<Edge>& edges, bool by_dst) {
  Adjacency adj;
  adj.offsets.assign(n + 1, 0);
  for (const Edge& e : edges) ++adj.offsets[(by_dst ? e.dst : e.src) + 1];
  std::partial_sum(adj.offsets.begin(), adj.offsets.end(), adj.offsets.begin());
  adj.edge_ids.resize(edges.size());
  std::vector<std::size_t> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
  for (std::size_t i = 0; i < edges.size(); ++i)
    adj.edge_ids[cursor[by_dst ? edges[i].dst : edges[i].src]++] = i;
  return adj;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos
                                                                        : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_timestamp(std::string_view s, std::int64_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec == std::errc() && ptr == s.data() + s.size()) return true;
  double d;
  if (parse_double(s, d) && std::floor(d) == d && std::abs(d) < 9e15) {
    out = static_cast<std::int64_t>(d);
    return true;
  }
  return false;
}

struct Row {
  std::size_t line;
  std::vector<std::string_view> fields;
};

// Reads the non-empty rows of a delimited file. The first row is dropped
// as a header when is_header says so; ids may be any string, so each file
// decides from its own columns.
class DelimitedFile {
 public:
  DelimitedFile(const std::filesystem::path& path, char delim,
                const std::function<bool(const Row&)>& is_header)
      : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      lines_.push_back(std::move(line));
      line_numbers_.push_back(line_no);
    }
    for (std::size_t i = 0; i < lines_.size(); ++i)
      rows_.push_back({line_numbers_[i], split(lines_[i], delim)});
    if (!rows_.empty() && is_header(rows_.front())) rows_.erase(rows_.begin());
  }

  const std::vector<Row>& rows() const { return rows_; }

  [[noreturn]] void fail(std::size_t line, const std::string& what) const {
    throw LoadError(path_ + ":" + std::to_string(line) + ": " + what);
  }

 private:
  std::string path_;
  std::vector<std::string> lines_;
  std::vector<std::size_t> line_numbers_;
  std::vector<Row> rows_;
};

void write_double(std::ofstream& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

}  // namespace

// --- TransactionGraph -----------------------------------------------------------

TransactionGraph::TransactionGraph(std::vector<std::string> node_ids, Matrix features,
                                   std::vector<std::int64_t> timestamps, std::vector<Label> labels,
                                   std::vector<Edge> edges)
    : node_ids_(std::move(node_ids)),
      features_(std::move(features)),
      timestamps_(std::move(timestamps)),
      labels_(std::move(labels)),
      edges_(std::move(edges)) {
  const std::size_t n = node_ids_.size();
  if (features_.rows != n || timestamps_.size() != n || labels_.size() != n)
    throw std::invalid_argument("TransactionGraph: per-node arrays disagree on node count");
  if (features_.data.size() != features_.rows * features_.cols)
    throw std::invalid_argument("TransactionGraph: feature payload does not match shape");
  for (std::int64_t t : timestamps_)
    if (t < 1) throw std::invalid_argument("TransactionGraph: timestamps must be >= 1");
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    if (e.src >= n || e.dst >= n)
      throw std::invalid_argument("TransactionGraph: edge " + std::to_string(i) +
                                  " endpoint out of range");
    if (e.src == e.dst)
      throw std::invalid_argument("TransactionGraph: self-loop at edge " + std::to_string(i));
  }
  in_adj_ = build_adjacency(n, edges_, true);
  out_adj_ = build_adjacency(n, edges_, false);
}

std::int64_t TransactionGraph::max_timestamp() const {
  return timestamps_.empty() ? 0 : *std::max_element(timestamps_.begin(), timestamps_.end());
}

std::size_t TransactionGraph::count_label(Label l) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), l));
}

Index TransactionGraph::labeled_nodes() const {
  Index out;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (is_labeled(labels_[i])) out.push_back(i);
  return out;
}

TransactionGraph TransactionGraph::with_features(Matrix features) const {
  return TransactionGraph(node_ids_, std::move(features), timestamps_, labels_, edges_);
}

bool TransactionGraph::adjacency_round_trips() const {
  auto check = [&](const Adjacency& adj, bool by_dst) {
    if (adj.offsets.size() != num_nodes() + 1 || adj.edge_ids.size() != edges_.size()) return false;
    std::vector<int> seen(edges_.size(), 0);
    for (std::size_t v = 0; v < num_nodes(); ++v)
      for (std::size_t e : adj.edges_of(v)) {
        if (e >= edges_.size() || (by_dst ? edges_[e].dst : edges_[e].src) != v) return false;
        ++seen[e];
      }
    return std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
  };
  return check(in_adj_, true) && check(out_adj_, false);
}

// --- Loading ---------------------------------------------------------------------

TransactionGraph load_graph(const std::filesystem::path& features_path,
                            const std::filesystem::path& classes_path,
                            const std::filesystem::path& edges_path, const LoadOptions& options) {
  // header: the time step column does not parse
  DelimitedFile feature_file(features_path, options.delimiter, [](const Row& row) {
    std::int64_t t;
    return row.fields.size() >= 2 && !parse_timestamp(row.fields[1], t);
  });
  const auto& frows = feature_file.rows();

  std::vector<std::string> ids;
  std::vector<std::int64_t> times;
  std::unordered_map<std::string, std::size_t> index_of;
  std::size_t raw_dim = 0;
  std::vector<double> values;
  ids.reserve(frows.size());
  times.reserve(frows.size());
  index_of.reserve(frows.size());

  for (std::size_t r = 0; r < frows.size(); ++r) {
    const Row& row = frows[r];
    if (row.fields.size() < 2) feature_file.fail(row.line, "expected id, time step and features");
    const std::size_t dim = row.fields.size() - 2;
    if (r == 0) {
      raw_dim = dim;
      for (std::size_t c : options.feature_columns)
        if (c >= raw_dim)
          feature_file.fail(row.line, "feature column " + std::to_string(c) + " out of range " +
                                          std::to_string(raw_dim));
    } else if (dim != raw_dim) {
      feature_file.fail(row.line, "ragged row: " + std::to_string(dim) + " features, expected " +
                                      std::to_string(raw_dim));
    }
    std::string id(row.fields[0]);
    if (id.empty()) feature_file.fail(row.line, "empty node id");
    if (!index_of.emplace(id, ids.size()).second)
      feature_file.fail(row.line, "duplicate node id " + id);
    std::int64_t t;
    if (!parse_timestamp(row.fields[1], t) || t < 1)
      feature_file.fail(row.line, "invalid time step '" + std::string(row.fields[1]) + "'");
    ids.push_back(std::move(id));
    times.push_back(t);
    auto take = [&](std::size_t c) {
      double v;
      if (!parse_double(row.fields[c + 2], v))
        feature_file.fail(row.line, "invalid feature value '" + std::string(row.fields[c + 2]) + "'");
      values.push_back(v);
    };
    if (options.feature_columns.empty()) {
      for (std::size_t c = 0; c < dim; ++c) take(c);
    } else {
      for (std::size_t c : options.feature_columns) take(c);
    }
  }
  const std::size_t n = ids.size();
  const std::size_t d = options.feature_columns.empty() ? raw_dim : options.feature_columns.size();
  Matrix features(n, d);
  features.data = std::move(values);

  std::vector<Label> labels(n, Label::unknown);
  {
    DelimitedFile class_file(classes_path, options.delimiter, [&](const Row& row) {
      return !index_of.contains(std::string(row.fields[0]));
    });
    std::vector<bool> seen(n, false);
    for (const Row& row : class_file.rows()) {
      if (row.fields.size() != 2) class_file.fail(row.line, "expected id and class token");
      auto it = index_of.find(std::string(row.fields[0]));
      if (it == index_of.end())
        class_file.fail(row.line, "unknown node id " + std::string(row.fields[0]));
      if (seen[it->second])
        class_file.fail(row.line, "duplicate class row for node " + std::string(row.fields[0]));
      seen[it->second] = true;
      const std::string_view token = row.fields[1];
      labels[it->second] = token == options.illicit_token ? Label::illicit
                           : token == options.licit_token ? Label::licit
                                                          : Label::unknown;
    }
  }

  std::vector<Edge> edges;
  {
    DelimitedFile edge_file(edges_path, options.delimiter, [&](const Row& row) {
      return std::none_of(row.fields.begin(), row.fields.end(),
                          [&](std::string_view f) { return index_of.contains(std::string(f)); });
    });
    edges.reserve(edge_file.rows().size());
    for (const Row& row : edge_file.rows()) {
      if (row.fields.size() != 2) edge_file.fail(row.line, "expected source and destination id");
      std::size_t ends[2];
      for (int k = 0; k < 2; ++k) {
        auto it = index_of.find(std::string(row.fields[k]));
        if (it == index_of.end())
          edge_file.fail(row.line, "edge references unknown node id " + std::string(row.fields[k]));
        ends[k] = it->second;
      }
      if (ends[0] == ends[1])
        edge_file.fail(row.line, "self-loop on node " + std::string(row.fields[0]));
      edges.push_back({ends[0], ends[1]});
    }
  }
  return TransactionGraph(std::move(ids), std::move(features), std::move(times), std::move(labels),
                          std::move(edges));
}

void save_graph(const TransactionGraph& graph, const std::filesystem::path& features_path,
                const std::filesystem::path& classes_path, const std::filesystem::path& edges_path,
                const LoadOptions& options) {
  const char delim = options.delimiter;
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw LoadError("cannot write " + p.string());
    return out;
  };
  {
    std::ofstream out = open(features_path);
    out << "txId" << delim << "time_step";
    for (std::size_t c = 0; c < graph.feature_dim(); ++c) out << delim << "f" << c;
    out << '\n';
    for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
      out << graph.node_ids()[i] << delim << graph.timestamps()[i];
      for (double v : graph.features().row(i)) {
        out << delim;
        write_double(out, v);
      }
      out << '\n';
    }
  }
  {
    std::ofstream out = open(classes_path);
    out << "txId" << delim << "class\n";
    for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
      const Label l = graph.labels()[i];
      out << graph.node_ids()[i] << delim
          << (l == Label::illicit ? options.illicit_token
              : l == Label::licit ? options.licit_token
                                  : std::string("unknown"))
          << '\n';
    }
  }
  {
    std::ofstream out = open(edges_path);
    out << "txId1" << delim << "txId2\n";
    for (const Edge& e : graph.edges())
      out << graph.node_ids()[e.src] << delim << graph.node_ids()[e.dst] << '\n';
  }
}

// --- Transformations ----------------------------------------------------------------

TransactionGraph induced_labeled_subgraph(const TransactionGraph& graph) {
  const Index keep = graph.labeled_nodes();
  constexpr std::size_t dropped = static_cast<std::size_t>(-1);
  std::vector<std::size_t> remap(graph.num_nodes(), dropped);
  std::vector<std::string> ids;
  std::vector<std::int64_t> times;
  std::vector<Label> labels;
  Matrix features(keep.size(), graph.feature_dim());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const std::size_t v = keep[k];
    remap[v] = k;
    ids.push_back(graph.node_ids()[v]);
    times.push_back(graph.timestamps()[v]);
    labels.push_back(graph.labels()[v]);
    std::copy(graph.features().row(v).begin(), graph.features().row(v).end(),
              features.row(k).begin());
  }
  std::vector<Edge> edges;
  for (const Edge& e : graph.edges())
    if (remap[e.src] != dropped && remap[e.dst] != dropped) edges.push_back({remap[e.src], remap[e.dst]});
  return TransactionGraph(std::move(ids), std::move(features), std::move(times), std::move(labels),
                          std::move(edges));
}

namespace {

void split_part(Index nodes, const SplitRatios& ratios, Rng& rng, SplitAssignment& out) {
  rng.shuffle(std::span<std::size_t>(nodes));
  const double n = static_cast<double>(nodes.size());
  // The small slack keeps e.g. 0.1 * 30 from flooring to 2.
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * n + 1e-9));
  out.train.insert(out.train.end(), nodes.begin(), nodes.begin() + n_train);
  out.val.insert(out.val.end(), nodes.begin() + n_train, nodes.begin() + n_train + n_val);
  out.held.insert(out.held.end(), nodes.begin() + n_train + n_val, nodes.end());
}

}  // namespace

SplitAssignment split_nodes(const TransactionGraph& graph, const SplitRatios& ratios,
                            std::uint64_t seed, bool stratified) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.held < 0 ||
      std::abs(ratios.train + ratios.val + ratios.held - 1.0) > 1e-9)
    throw std::invalid_argument("split_nodes: ratios must be nonnegative and sum to 1");
  const Index labeled = graph.labeled_nodes();
  if (labeled.size() < 3)
    throw std::invalid_argument("split_nodes: need at least 3 labeled nodes, got " +
                                std::to_string(labeled.size()));
  SplitAssignment out;
  out.seed = seed;
  Rng rng(seed, "split");
  if (!stratified) {
    split_part(labeled, ratios, rng, out);
  } else {
    for (Label cls : {Label::licit, Label::illicit}) {
      Index part;
      for (std::size_t v : labeled)
        if (graph.labels()[v] == cls) part.push_back(v);
      split_part(std::move(part), ratios, rng, out);
    }
  }
  return out;
}

std::int64_t edge_time_delta(const TransactionGraph& graph, std::size_t edge) {
  if (edge >= graph.num_edges())
    throw std::out_of_range("edge_time_delta: edge " + std::to_string(edge) + " out of range " +
                            std::to_string(graph.num_edges()));
  const Edge& e = graph.edges()[edge];
  const std::int64_t d = graph.timestamps()[e.src] - graph.timestamps()[e.dst];
  return d < 0 ? -d : d;
}

Matrix standardize_features(const Matrix& features, const Index& fit_rows) {
  if (fit_rows.empty()) throw std::invalid_argument("standardize_features: no rows to fit on");
  Matrix out = features;
  const double n = static_cast<double>(fit_rows.size());
  for (std::size_t c = 0; c < features.cols; ++c) {
    double mu = 0.0;
    for (std::size_t r : fit_rows) mu += features(r, c);
    mu /= n;
    double var = 0.0;
    for (std::size_t r : fit_rows) var += (features(r, c) - mu) * (features(r, c) - mu);
    const double sd = std::sqrt(var / n);
    for (std::size_t r = 0; r < features.rows; ++r)
      out(r, c) = sd > 0.0 ? (features(r, c) - mu) / sd : features(r, c) - mu;
  }
  return out;
}

}  // namespace atgat
