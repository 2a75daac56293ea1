// SPDX-License-Identifier: Apache-2.0
//
// Temporal-aware triple attention.
//
// Messages flow along edges src -> dst and every node carries a self-loop,
// so each destination's in-neighborhood is nonempty. Per head h:
//
//   structural  s = <Q h_dst, K h_src> / sqrt(d_h), softmax per destination
//   temporal    s = <Q h_dst, K h_src + K_t e> / sqrt(d_h), softmax per destination
//   global      s = leaky_relu(w_g . [h_dst | h_src | e]), softmax over all edges
//
// A per-edge perceptron over [alpha_s | alpha_t | alpha_g | e] yields three
// fusion logits; their softmax weights the three scores, and the blend is
// renormalized per destination so aggregation stays a convex combination.
#pragma once

#include <array>
#include <cstddef>
#include <optional>

#include "atgat/autodiff.hpp"
#include "atgat/graph_data.hpp"
#include "atgat/matrix.hpp"

namespace atgat {

/// Edge list used by message passing: the graph's edges followed by one
/// self-loop per node.
struct EdgeIndex {
  Index src;
  Index dst;
  std::size_t num_nodes = 0;
  /// Number of leading entries that are raw graph edges.
  std::size_t num_raw = 0;

  std::size_t size() const { return src.size(); }
};

EdgeIndex with_self_loops(const TransactionGraph& graph);
EdgeIndex with_self_loops(std::size_t num_nodes, std::span<const Edge> edges);

struct AttentionConfig {
  std::size_t d_in = 64;
  std::size_t d_out = 64;
  std::size_t d_t = 32;
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  std::size_t fusion_hidden = 16;
  double leaky_slope = 0.2;
  double dropout = 0.1;

  std::size_t width() const { return heads * head_dim; }
  void validate() const;
};

/// Which attention families feed aggregation.
enum class AttentionPath {
  structural,  // alpha = alpha_s, values V h_src
  temporal,    // alpha = alpha_t, values V h_src + V_t e
  triple,      // adaptive fusion of all three, values V h_src + V_t e
};

template <class T>
struct AttentionLayerWeights {
  T w_q;   // d_in x H*d_h
  T w_k;   // d_in x H*d_h
  T w_v;   // d_in x H*d_h
  T w_kt;  // d_t x H*d_h
  T w_vt;  // d_t x H*d_h
  T w_g;   // (2*d_in + d_t) x H, one column per head
  T w_f1;  // (3H + d_t) x fusion_hidden
  T b_f1;
  T w_f2;  // fusion_hidden x 3
  T b_f2;
  T w_o;  // H*d_h x d_out
  T b_o;

  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }
  template <class F>
  auto map(F&& f) const {
    using U = decltype(f(w_q));
    return AttentionLayerWeights<U>{f(w_q),  f(w_k),  f(w_v),  f(w_kt), f(w_vt), f(w_g),
                                    f(w_f1), f(b_f1), f(w_f2), f(b_f2), f(w_o),  f(b_o)};
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f("w_q", s.w_q);
    f("w_k", s.w_k);
    f("w_v", s.w_v);
    f("w_kt", s.w_kt);
    f("w_vt", s.w_vt);
    f("w_g", s.w_g);
    f("w_f1", s.w_f1);
    f("b_f1", s.b_f1);
    f("w_f2", s.w_f2);
    f("b_f2", s.b_f2);
    f("w_o", s.w_o);
    f("b_o", s.b_o);
  }
};

using AttentionLayerParams = AttentionLayerWeights<Matrix>;

AttentionLayerParams make_attention_weights(const AttentionConfig& config);

/// Classic additive (GAT-style) attention layer used by the baseline variant:
/// e = leaky_relu(a_dst . W h_dst + a_src . W h_src), softmax per destination.
template <class T>
struct AdditiveLayerWeights {
  T w;      // d_in x H*d_h
  T a_src;  // 1 x H*d_h
  T a_dst;  // 1 x H*d_h
  T w_o;    // H*d_h x d_out
  T b_o;

  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }
  template <class F>
  auto map(F&& f) const {
    using U = decltype(f(w));
    return AdditiveLayerWeights<U>{f(w), f(a_src), f(a_dst), f(w_o), f(b_o)};
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f("w", s.w);
    f("a_src", s.a_src);
    f("a_dst", s.a_dst);
    f("w_o", s.w_o);
    f("b_o", s.b_o);
  }
};

using AdditiveLayerParams = AdditiveLayerWeights<Matrix>;

AdditiveLayerParams make_additive_weights(const AttentionConfig& config);

// --- Scores ---------------------------------------------------------------------------
// All score functions return E x H matrices aligned with `edges`.

ad::Var structural_scores(ad::Var h, const EdgeIndex& edges,
                          const AttentionLayerWeights<ad::Var>& w, const AttentionConfig& config);

ad::Var temporal_scores(ad::Var h, const EdgeIndex& edges, ad::Var e_time,
                        const AttentionLayerWeights<ad::Var>& w, const AttentionConfig& config);

/// Softmax over all edges (one segment) per head. Requires at least one edge.
ad::Var global_scores(ad::Var h, const EdgeIndex& edges, ad::Var e_time,
                      const AttentionLayerWeights<ad::Var>& w, const AttentionConfig& config);

/// E x 3 fusion weights (w_s, w_t, w_g), each row on the simplex.
ad::Var fusion_weights(ad::Var alpha_s, ad::Var alpha_t, ad::Var alpha_g, ad::Var e_time,
                       const AttentionLayerWeights<ad::Var>& w);

/// Blends the three score families with per-edge weights (E x 3) and
/// renormalizes per destination.
ad::Var fuse_attention(ad::Var alpha_s, ad::Var alpha_t, ad::Var alpha_g, ad::Var weights,
                       const EdgeIndex& edges);

struct AttentionOptions {
  AttentionPath path = AttentionPath::triple;
  /// Replaces the fusion network output with fixed weights (w_s, w_t, w_g).
  std::optional<std::array<double, 3>> forced_fusion;
};

/// One attention layer: aggregates per-head messages alpha * (V h_src [+ V_t e])
/// at destinations, concatenates heads and applies the output projection.
/// `e_time` may be invalid only for the structural path.
ad::Var attention_layer_forward(ad::Var h, const EdgeIndex& edges, ad::Var e_time,
                                const AttentionLayerWeights<ad::Var>& w,
                                const AttentionConfig& config, const AttentionOptions& options,
                                ad::Mode mode, Rng& rng);

ad::Var additive_layer_forward(ad::Var h, const EdgeIndex& edges,
                               const AdditiveLayerWeights<ad::Var>& w,
                               const AttentionConfig& config, ad::Mode mode, Rng& rng);

}  // namespace atgat
