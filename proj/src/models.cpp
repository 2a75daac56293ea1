// SPDX-License-Identifier: Apache-2.0
#include "atgat/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace atgat {

using ad::Var;

// --- ModelSpec ----------------------------------------------------------------------

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::b_gat: return "B-GAT";
    case Variant::s_gat: return "S-GAT";
    case Variant::t_gat: return "T-GAT";
    case Variant::atgat: return "ATGAT";
    case Variant::gcn: return "GCN";
    case Variant::logreg: return "LR";
  }
  return "?";
}

bool uses_attention(Variant v) {
  return v == Variant::s_gat || v == Variant::t_gat || v == Variant::atgat;
}

bool uses_time(Variant v) { return v == Variant::t_gat || v == Variant::atgat; }

ModelSpec ModelSpec::parse(std::string_view name) {
  std::string upper(name);
  for (char& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  ModelSpec spec;
  spec.loss = LossMode::plain;
  if (upper.size() > 2 && upper.ends_with("-W")) {
    spec.loss = LossMode::weighted;
    upper.resize(upper.size() - 2);
  }
  if (upper == "B-GAT") spec.variant = Variant::b_gat;
  else if (upper == "S-GAT") spec.variant = Variant::s_gat;
  else if (upper == "T-GAT") spec.variant = Variant::t_gat;
  else if (upper == "ATGAT") spec.variant = Variant::atgat;
  else if (upper == "GCN") spec.variant = Variant::gcn;
  else if (upper == "LR" || upper == "LOGREG") spec.variant = Variant::logreg;
  else throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
  return spec;
}

std::string ModelSpec::name() const {
  std::string n(variant_name(variant));
  if (loss == LossMode::weighted) n += "-W";
  return n;
}

// --- Config ----------------------------------------------------------------------------

AttentionConfig ModelConfig::attention_config() const {
  AttentionConfig c;
  c.d_in = hidden_dim;
  c.d_out = hidden_dim;
  c.d_t = temporal.d_t;
  c.heads = heads;
  c.head_dim = head_dim;
  c.fusion_hidden = fusion_hidden;
  c.leaky_slope = leaky_slope;
  c.dropout = attention_dropout;
  return c;
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("model: input_dim must be positive");
  if (spec.variant == Variant::logreg) return;
  if (hidden_dim == 0 || layers == 0) throw std::invalid_argument("model: hidden_dim and layers must be positive");
  if (spec.variant != Variant::gcn) attention_config().validate();
  temporal.validate();
}

// --- Parameters ------------------------------------------------------------------------

ModelParams make_model_weights(const ModelConfig& c) {
  c.validate();
  ModelParams p;
  const Variant v = c.spec.variant;
  if (v == Variant::logreg) {
    p.head = {Matrix(c.input_dim, 1), Matrix(1, 1)};
    return p;
  }
  if (v == Variant::gcn) {
    std::size_t in = c.input_dim;
    for (std::size_t l = 0; l < c.layers; ++l) {
      p.gcn.push_back({Matrix(in, c.hidden_dim), Matrix(1, c.hidden_dim)});
      in = c.hidden_dim;
    }
  } else {
    p.input = LinearWeights<Matrix>{Matrix(c.input_dim, c.hidden_dim), Matrix(1, c.hidden_dim)};
    const AttentionConfig ac = c.attention_config();
    if (uses_time(v)) {
      const std::size_t copies = c.share_temporal_embedding ? 1 : c.layers;
      for (std::size_t i = 0; i < copies; ++i) p.temporal.push_back(make_temporal_weights(c.temporal));
    }
    for (std::size_t l = 0; l < c.layers; ++l) {
      if (v == Variant::b_gat) p.additive.push_back(make_additive_weights(ac));
      else p.attention.push_back(make_attention_weights(ac));
    }
  }
  p.head = {Matrix(c.hidden_dim, 1), Matrix(1, 1)};
  return p;
}

namespace {

bool is_bias(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf == "b" || leaf.starts_with("b_") || leaf == "ln_bias";
}

bool is_gain(const std::string& name) { return name.ends_with("ln_gain"); }

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = make_model_weights(config);
  p.visit([seed](const std::string& name, Matrix& m) {
    if (is_bias(name)) {
      std::fill(m.data.begin(), m.data.end(), 0.0);
    } else if (is_gain(name)) {
      std::fill(m.data.begin(), m.data.end(), 1.0);
    } else {
      Rng rng(seed, name);
      const double bound = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
      for (double& x : m.data) x = rng.uniform(-bound, bound);
    }
  });
  return p;
}

void check_params(const ModelParams& params, const ModelConfig& config) {
  const ModelParams expected = make_model_weights(config);
  std::vector<std::pair<std::string, const Matrix*>> have, want;
  params.visit([&](const std::string& n, const Matrix& m) { have.emplace_back(n, &m); });
  expected.visit([&](const std::string& n, const Matrix& m) { want.emplace_back(n, &m); });
  if (have.size() != want.size())
    throw std::invalid_argument("parameters: expected " + std::to_string(want.size()) +
                                " tensors for " + config.spec.name() + ", got " +
                                std::to_string(have.size()));
  for (std::size_t i = 0; i < have.size(); ++i) {
    if (have[i].first != want[i].first)
      throw std::invalid_argument("parameters: expected tensor " + want[i].first + ", got " +
                                  have[i].first);
    if (!have[i].second->same_shape(*want[i].second))
      throw std::invalid_argument("parameters: tensor " + have[i].first + " has shape " +
                                  have[i].second->shape_string() + ", expected " +
                                  want[i].second->shape_string());
  }
}

ModelWeights<Var> bind_params(ad::ValueGraph& graph, const ModelParams& params) {
  return params.map([&graph](const Matrix& m) { return graph.parameter(m); });
}

// --- Inputs -------------------------------------------------------------------------------

void build_gcn_propagation(std::size_t n, std::span<const Edge> edges, EdgeIndex& out_edges,
                           Matrix& out_weights) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(2 * edges.size() + n);
  for (const Edge& e : edges) {
    pairs.emplace_back(e.src, e.dst);
    pairs.emplace_back(e.dst, e.src);
  }
  for (std::size_t v = 0; v < n; ++v) pairs.emplace_back(v, v);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::vector<double> degree(n, 0.0);
  for (const auto& [s, d] : pairs) degree[d] += 1.0;
  out_edges = EdgeIndex{};
  out_edges.num_nodes = n;
  out_weights = Matrix(pairs.size(), 1);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out_edges.src.push_back(pairs[i].first);
    out_edges.dst.push_back(pairs[i].second);
    out_weights(i, 0) = 1.0 / std::sqrt(degree[pairs[i].first] * degree[pairs[i].second]);
  }
}

GraphInputs prepare_inputs(const TransactionGraph& graph, const ModelConfig& config) {
  if (graph.num_nodes() == 0) throw std::invalid_argument("prepare_inputs: empty graph");
  if (graph.feature_dim() != config.input_dim)
    throw std::invalid_argument("prepare_inputs: graph has " + std::to_string(graph.feature_dim()) +
                                " features, model expects " + std::to_string(config.input_dim));
  GraphInputs in;
  in.features = graph.features();
  in.edges = with_self_loops(graph);
  if (uses_time(config.spec.variant)) {
    std::vector<std::int64_t> ts, td;
    ts.reserve(in.edges.size());
    td.reserve(in.edges.size());
    for (std::size_t e = 0; e < in.edges.size(); ++e) {
      ts.push_back(graph.timestamps()[in.edges.src[e]]);
      td.push_back(graph.timestamps()[in.edges.dst[e]]);
    }
    in.temporal = make_temporal_inputs(ts, td, config.temporal.d_pos);
  }
  if (config.spec.variant == Variant::gcn)
    build_gcn_propagation(graph.num_nodes(), graph.edges(), in.gcn_edges, in.gcn_weights);
  return in;
}

// --- Forward --------------------------------------------------------------------------------

Var forward_logits(ad::ValueGraph& g, const ModelWeights<Var>& w, const GraphInputs& in,
                   const ModelConfig& c, ad::Mode mode, Rng& rng) {
  const Variant v = c.spec.variant;
  const Var x = g.constant(in.features);
  if (x.cols() != c.input_dim)
    throw std::invalid_argument("forward: features have " + std::to_string(x.cols()) +
                                " columns, model expects " + std::to_string(c.input_dim));
  if (v == Variant::logreg) return ad::add_row(ad::matmul(x, w.head.w), w.head.b);

  Var h;
  if (v == Variant::gcn) {
    if (w.gcn.empty()) throw std::invalid_argument("forward: GCN weights missing");
    if (in.gcn_edges.num_nodes != x.rows())
      throw std::invalid_argument("forward: GCN propagation not prepared for this graph");
    const Var norm = g.constant(in.gcn_weights);
    h = x;
    for (std::size_t l = 0; l < w.gcn.size(); ++l) {
      const Var xw = ad::matmul(h, w.gcn[l].w);
      const Var msg = ad::mul(ad::gather_rows(xw, in.gcn_edges.src),
                              ad::expand_groups(norm, xw.cols()));
      h = ad::add_row(ad::scatter_add_rows(msg, in.gcn_edges.dst, x.rows()), w.gcn[l].b);
      if (l + 1 < w.gcn.size()) h = ad::relu(h);
    }
    return ad::add_row(ad::matmul(h, w.head.w), w.head.b);
  }

  if (!w.input) throw std::invalid_argument("forward: input projection missing");
  const AttentionConfig ac = c.attention_config();
  h = ad::add_row(ad::matmul(x, w.input->w), w.input->b);

  if (v == Variant::b_gat) {
    if (w.additive.empty()) throw std::invalid_argument("forward: additive attention weights missing");
    for (std::size_t l = 0; l < w.additive.size(); ++l) {
      h = additive_layer_forward(h, in.edges, w.additive[l], ac, mode, rng);
      if (l + 1 < w.additive.size()) h = ad::relu(h);
    }
    return ad::add_row(ad::matmul(h, w.head.w), w.head.b);
  }

  if (w.attention.empty()) throw std::invalid_argument("forward: attention weights missing");
  AttentionOptions options;
  options.path = v == Variant::s_gat   ? AttentionPath::structural
                 : v == Variant::t_gat ? AttentionPath::temporal
                                       : AttentionPath::triple;
  options.forced_fusion = c.forced_fusion;

  Var e_time;
  const bool timed = options.path != AttentionPath::structural;
  if (timed) {
    if (w.temporal.empty()) throw std::invalid_argument("forward: temporal embedding weights missing");
    if (in.temporal.delta.rows != in.edges.size())
      throw std::invalid_argument("forward: temporal inputs not prepared for this graph");
  }
  for (std::size_t l = 0; l < w.attention.size(); ++l) {
    if (timed && (l == 0 || w.temporal.size() > 1)) {
      const auto& tw = w.temporal[std::min(l, w.temporal.size() - 1)];
      e_time = temporal_embedding(g, in.temporal, tw, c.temporal, mode, rng);
    }
    h = attention_layer_forward(h, in.edges, e_time, w.attention[l], ac, options, mode, rng);
    if (l + 1 < w.attention.size()) h = ad::relu(h);
  }
  return ad::add_row(ad::matmul(h, w.head.w), w.head.b);
}

Var forward(ad::ValueGraph& g, const ModelWeights<Var>& w, const GraphInputs& in,
            const ModelConfig& c, ad::Mode mode, Rng& rng) {
  return ad::sigmoid(forward_logits(g, w, in, c, mode, rng));
}

std::vector<double> predict(const GraphInputs& inputs, const ModelParams& params,
                            const ModelConfig& config) {
  ad::ValueGraph g;
  Rng rng(0);
  const auto weights = params.map([&g](const Matrix& m) { return g.constant(m); });
  const Var p = forward(g, weights, inputs, config, ad::Mode::eval, rng);
  return p.value().data;
}

}  // namespace atgat
