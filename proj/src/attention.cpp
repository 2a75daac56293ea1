// SPDX-License-Identifier: Apache-2.0
#include "atgat/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace atgat {

using ad::Var;

EdgeIndex with_self_loops(std::size_t num_nodes, std::span<const Edge> edges) {
  EdgeIndex idx;
  idx.num_nodes = num_nodes;
  idx.num_raw = edges.size();
  idx.src.reserve(edges.size() + num_nodes);
  idx.dst.reserve(edges.size() + num_nodes);
  for (const Edge& e : edges) {
    if (e.src >= num_nodes || e.dst >= num_nodes)
      throw std::invalid_argument("with_self_loops: edge endpoint out of range");
    idx.src.push_back(e.src);
    idx.dst.push_back(e.dst);
  }
  for (std::size_t v = 0; v < num_nodes; ++v) {
    idx.src.push_back(v);
    idx.dst.push_back(v);
  }
  return idx;
}

EdgeIndex with_self_loops(const TransactionGraph& graph) {
  return with_self_loops(graph.num_nodes(), graph.edges());
}

void AttentionConfig::validate() const {
  if (d_in == 0 || d_out == 0 || heads == 0 || head_dim == 0 || fusion_hidden == 0)
    throw std::invalid_argument("attention: dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("attention: dropout must be in [0, 1)");
}

AttentionLayerParams make_attention_weights(const AttentionConfig& c) {
  c.validate();
  const std::size_t w = c.width();
  AttentionLayerParams p;
  p.w_q = Matrix(c.d_in, w);
  p.w_k = Matrix(c.d_in, w);
  p.w_v = Matrix(c.d_in, w);
  p.w_kt = Matrix(c.d_t, w);
  p.w_vt = Matrix(c.d_t, w);
  p.w_g = Matrix(2 * c.d_in + c.d_t, c.heads);
  p.w_f1 = Matrix(3 * c.heads + c.d_t, c.fusion_hidden);
  p.b_f1 = Matrix(1, c.fusion_hidden);
  p.w_f2 = Matrix(c.fusion_hidden, 3);
  p.b_f2 = Matrix(1, 3);
  p.w_o = Matrix(w, c.d_out);
  p.b_o = Matrix(1, c.d_out);
  return p;
}

AdditiveLayerParams make_additive_weights(const AttentionConfig& c) {
  c.validate();
  const std::size_t w = c.width();
  AdditiveLayerParams p;
  p.w = Matrix(c.d_in, w);
  p.a_src = Matrix(1, w);
  p.a_dst = Matrix(1, w);
  p.w_o = Matrix(w, c.d_out);
  p.b_o = Matrix(1, c.d_out);
  return p;
}

namespace {

void check_rows(Var h, const EdgeIndex& edges) {
  if (h.rows() != edges.num_nodes)
    throw std::invalid_argument("attention: node matrix has " + std::to_string(h.rows()) +
                                " rows, edge index expects " + std::to_string(edges.num_nodes));
}

void check_e_time(Var e_time, const EdgeIndex& edges) {
  if (!e_time.valid()) throw std::invalid_argument("attention: temporal embedding required");
  if (e_time.rows() != edges.size())
    throw std::invalid_argument("attention: temporal embedding has " +
                                std::to_string(e_time.rows()) + " rows for " +
                                std::to_string(edges.size()) + " edges");
}

// Per-head scaled dot product of two E x H*d_h matrices.
Var head_dot(Var queries, Var keys, const AttentionConfig& c) {
  return ad::scale(ad::row_group_sum(ad::mul(queries, keys), c.head_dim),
                   1.0 / std::sqrt(static_cast<double>(c.head_dim)));
}

Var neighborhood_softmax(Var raw, const EdgeIndex& edges) {
  return ad::segment_softmax(raw, edges.dst, edges.num_nodes);
}

Var global_from_h(Var h, const EdgeIndex& edges, Var e_time, const AttentionLayerWeights<Var>& w,
                  const AttentionConfig& c) {
  if (edges.size() == 0) throw std::invalid_argument("global_scores: empty edge set");
  const Var features = ad::concat_cols(
      std::vector<Var>{ad::gather_rows(h, edges.dst), ad::gather_rows(h, edges.src), e_time});
  const Var raw = ad::leaky_relu(ad::matmul(features, w.w_g), c.leaky_slope);
  return ad::segment_softmax(raw, ad::Index(edges.size(), 0), 1);
}

}  // namespace

Var structural_scores(Var h, const EdgeIndex& edges, const AttentionLayerWeights<Var>& w,
                      const AttentionConfig& c) {
  check_rows(h, edges);
  const Var q = ad::gather_rows(ad::matmul(h, w.w_q), edges.dst);
  const Var k = ad::gather_rows(ad::matmul(h, w.w_k), edges.src);
  return neighborhood_softmax(head_dot(q, k, c), edges);
}

Var temporal_scores(Var h, const EdgeIndex& edges, Var e_time, const AttentionLayerWeights<Var>& w,
                    const AttentionConfig& c) {
  check_rows(h, edges);
  check_e_time(e_time, edges);
  const Var q = ad::gather_rows(ad::matmul(h, w.w_q), edges.dst);
  const Var k = ad::add(ad::gather_rows(ad::matmul(h, w.w_k), edges.src), ad::matmul(e_time, w.w_kt));
  return neighborhood_softmax(head_dot(q, k, c), edges);
}

Var global_scores(Var h, const EdgeIndex& edges, Var e_time, const AttentionLayerWeights<Var>& w,
                  const AttentionConfig& c) {
  check_rows(h, edges);
  check_e_time(e_time, edges);
  return global_from_h(h, edges, e_time, w, c);
}

Var fusion_weights(Var alpha_s, Var alpha_t, Var alpha_g, Var e_time,
                   const AttentionLayerWeights<Var>& w) {
  const Var input = ad::concat_cols(std::vector<Var>{alpha_s, alpha_t, alpha_g, e_time});
  const Var hidden = ad::relu(ad::add_row(ad::matmul(input, w.w_f1), w.b_f1));
  return ad::softmax_rows(ad::add_row(ad::matmul(hidden, w.w_f2), w.b_f2));
}

Var fuse_attention(Var alpha_s, Var alpha_t, Var alpha_g, Var weights, const EdgeIndex& edges) {
  const Matrix& s = alpha_s.value();
  if (!s.same_shape(alpha_t.value()) || !s.same_shape(alpha_g.value()) || s.rows != edges.size())
    throw std::invalid_argument("fuse_attention: score tensors are not aligned on edges x heads");
  if (weights.rows() != s.rows || weights.cols() != 3)
    throw std::invalid_argument("fuse_attention: fusion weights must be E x 3, got " +
                                weights.value().shape_string());
  const std::size_t heads = s.cols;
  auto part = [&](Var alpha, std::size_t k) {
    return ad::mul(alpha, ad::expand_groups(ad::slice_cols(weights, k, 1), heads));
  };
  const Var blended = ad::add(ad::add(part(alpha_s, 0), part(alpha_t, 1)), part(alpha_g, 2));
  return ad::segment_normalize(blended, edges.dst, edges.num_nodes);
}

Var attention_layer_forward(Var h, const EdgeIndex& edges, Var e_time,
                            const AttentionLayerWeights<Var>& w, const AttentionConfig& c,
                            const AttentionOptions& options, ad::Mode mode, Rng& rng) {
  check_rows(h, edges);
  if (options.path != AttentionPath::structural) check_e_time(e_time, edges);
  ad::ValueGraph& g = h.graph();

  const Var q = ad::gather_rows(ad::matmul(h, w.w_q), edges.dst);
  const Var k = ad::gather_rows(ad::matmul(h, w.w_k), edges.src);
  Var values = ad::gather_rows(ad::matmul(h, w.w_v), edges.src);

  Var alpha;
  if (options.path == AttentionPath::structural) {
    alpha = ad::segment_normalize(neighborhood_softmax(head_dot(q, k, c), edges), edges.dst,
                                  edges.num_nodes);
  } else {
    values = ad::add(values, ad::matmul(e_time, w.w_vt));
    const Var k_t = ad::add(k, ad::matmul(e_time, w.w_kt));
    const Var alpha_t = neighborhood_softmax(head_dot(q, k_t, c), edges);
    if (options.path == AttentionPath::temporal) {
      alpha = ad::segment_normalize(alpha_t, edges.dst, edges.num_nodes);
    } else {
      const Var alpha_s = neighborhood_softmax(head_dot(q, k, c), edges);
      const Var alpha_g = global_from_h(h, edges, e_time, w, c);
      Var weights;
      if (options.forced_fusion) {
        Matrix fixed(edges.size(), 3);
        for (std::size_t r = 0; r < fixed.rows; ++r)
          for (std::size_t j = 0; j < 3; ++j) fixed(r, j) = (*options.forced_fusion)[j];
        weights = g.constant(std::move(fixed));
      } else {
        weights = fusion_weights(alpha_s, alpha_t, alpha_g, e_time, w);
      }
      alpha = fuse_attention(alpha_s, alpha_t, alpha_g, weights, edges);
    }
  }
  alpha = ad::dropout(alpha, c.dropout, mode, rng);

  const Var messages = ad::mul(values, ad::expand_groups(alpha, c.head_dim));
  const Var aggregated = ad::scatter_add_rows(messages, edges.dst, edges.num_nodes);
  return ad::add_row(ad::matmul(aggregated, w.w_o), w.b_o);
}

Var additive_layer_forward(Var h, const EdgeIndex& edges, const AdditiveLayerWeights<Var>& w,
                           const AttentionConfig& c, ad::Mode mode, Rng& rng) {
  check_rows(h, edges);
  const Var wh = ad::matmul(h, w.w);
  const Var s_src = ad::row_group_sum(ad::mul_row(wh, w.a_src), c.head_dim);
  const Var s_dst = ad::row_group_sum(ad::mul_row(wh, w.a_dst), c.head_dim);
  const Var raw = ad::leaky_relu(
      ad::add(ad::gather_rows(s_dst, edges.dst), ad::gather_rows(s_src, edges.src)), c.leaky_slope);
  Var alpha = neighborhood_softmax(raw, edges);
  alpha = ad::dropout(alpha, c.dropout, mode, rng);
  const Var messages =
      ad::mul(ad::gather_rows(wh, edges.src), ad::expand_groups(alpha, c.head_dim));
  const Var aggregated = ad::scatter_add_rows(messages, edges.dst, edges.num_nodes);
  return ad::add_row(ad::matmul(aggregated, w.w_o), w.b_o);
}

}  // namespace atgat
