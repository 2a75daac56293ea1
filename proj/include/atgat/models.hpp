// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "atgat/attention.hpp"
#include "atgat/autodiff.hpp"
#include "atgat/graph_data.hpp"
#include "atgat/temporal_embedding.hpp"

namespace atgat {

enum class Variant { b_gat, s_gat, t_gat, atgat, gcn, logreg };
enum class LossMode { plain, weighted };

/// Variant plus loss, e.g. "ATGAT-W" = {atgat, weighted}.
struct ModelSpec {
  Variant variant = Variant::atgat;
  LossMode loss = LossMode::weighted;

  /// Accepts B-GAT, S-GAT, T-GAT, ATGAT, GCN, LR (or LOGREG), each with an
  /// optional "-W" suffix selecting the weighted loss. Case-insensitive.
  static ModelSpec parse(std::string_view name);
  std::string name() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

std::string_view variant_name(Variant v);
bool uses_attention(Variant v);
bool uses_time(Variant v);

struct ModelConfig {
  ModelSpec spec;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  std::size_t fusion_hidden = 16;
  double leaky_slope = 0.2;
  double attention_dropout = 0.1;
  TemporalEmbeddingConfig temporal;
  /// One temporal embedding computed per forward pass and shared by all
  /// layers; when false each layer owns and recomputes its own.
  bool share_temporal_embedding = true;
  /// Pins the fusion weights (w_s, w_t, w_g) of every triple-attention layer.
  std::optional<std::array<double, 3>> forced_fusion;

  AttentionConfig attention_config() const;
  void validate() const;
};

template <class T>
struct LinearWeights {
  T w;  // in x out
  T b;  // 1 x out

  template <class F>
  void visit(F&& f) {
    f("w", w);
    f("b", b);
  }
  template <class F>
  void visit(F&& f) const {
    f("w", w);
    f("b", b);
  }
  template <class F>
  auto map(F&& f) const {
    using U = decltype(f(w));
    return LinearWeights<U>{f(w), f(b)};
  }
};

/// Every trainable tensor of a model. Which members are populated depends on
/// the variant: the dot-product attention family uses `input`, `temporal`
/// (T-GAT/ATGAT) and `attention`; B-GAT uses `input` and `additive`; GCN
/// uses `gcn`; logistic regression uses only `head`.
template <class T>
struct ModelWeights {
  std::optional<LinearWeights<T>> input;
  std::vector<TemporalEmbeddingWeights<T>> temporal;
  std::vector<AttentionLayerWeights<T>> attention;
  std::vector<AdditiveLayerWeights<T>> additive;
  std::vector<LinearWeights<T>> gcn;
  LinearWeights<T> head;

  /// Calls f(name, tensor) in a fixed order; names are stable checkpoint keys.
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
    using U = decltype(f(head.w));
    ModelWeights<U> out;
    if (input) out.input = input->map(f);
    for (const auto& t : temporal) out.temporal.push_back(t.map(f));
    for (const auto& l : attention) out.attention.push_back(l.map(f));
    for (const auto& l : additive) out.additive.push_back(l.map(f));
    for (const auto& l : gcn) out.gcn.push_back(l.map(f));
    out.head = head.map(f);
    return out;
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    auto prefixed = [&f](const std::string& prefix) {
      return [&f, prefix](const char* name, auto& t) { f(prefix + name, t); };
    };
    if (s.input) s.input->visit(prefixed("input."));
    for (std::size_t i = 0; i < s.temporal.size(); ++i)
      s.temporal[i].visit(prefixed("temporal" + std::to_string(i) + "."));
    for (std::size_t i = 0; i < s.attention.size(); ++i)
      s.attention[i].visit(prefixed("layer" + std::to_string(i) + "."));
    for (std::size_t i = 0; i < s.additive.size(); ++i)
      s.additive[i].visit(prefixed("additive" + std::to_string(i) + "."));
    for (std::size_t i = 0; i < s.gcn.size(); ++i)
      s.gcn[i].visit(prefixed("gcn" + std::to_string(i) + "."));
    s.head.visit(prefixed("head."));
  }
};

using ModelParams = ModelWeights<Matrix>;

/// Zero-filled parameters with the shapes implied by `config`.
ModelParams make_model_weights(const ModelConfig& config);

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases,
/// unit layer-norm gains. Each tensor draws from its own stream keyed by
/// (seed, tensor name), so tensors shared across variants get equal values.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Throws std::invalid_argument when tensor names or shapes disagree with `config`.
void check_params(const ModelParams& params, const ModelConfig& config);

ModelWeights<ad::Var> bind_params(ad::ValueGraph& graph, const ModelParams& params);

/// Per-graph constants consumed by the forward pass.
struct GraphInputs {
  EdgeIndex edges;      // graph edges plus self-loops
  Matrix features;      // N x d
  TemporalInputs temporal;  // aligned with `edges`; empty when unused
  EdgeIndex gcn_edges;  // undirected edges plus self-loops
  Matrix gcn_weights;   // per gcn edge, 1 / sqrt(deg_src * deg_dst)
};

GraphInputs prepare_inputs(const TransactionGraph& graph, const ModelConfig& config);

/// Symmetric-normalized propagation over the undirected graph with self-loops.
void build_gcn_propagation(std::size_t num_nodes, std::span<const Edge> edges, EdgeIndex& out_edges,
                           Matrix& out_weights);

/// N x 1 logits.
ad::Var forward_logits(ad::ValueGraph& graph, const ModelWeights<ad::Var>& weights,
                       const GraphInputs& inputs, const ModelConfig& config, ad::Mode mode,
                       Rng& rng);

/// N x 1 probabilities in (0, 1).
ad::Var forward(ad::ValueGraph& graph, const ModelWeights<ad::Var>& weights,
                const GraphInputs& inputs, const ModelConfig& config, ad::Mode mode, Rng& rng);

/// Eval-mode per-node probabilities; pure function of its arguments.
std::vector<double> predict(const GraphInputs& inputs, const ModelParams& params,
                            const ModelConfig& config);

// --- Checkpoints ------------------------------------------------------------------------
// Text header (format version, model config, seed, block count) followed by
// named blocks "block <name> <rows> <cols>\n" + rows*cols little-endian doubles.

struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  ModelParams params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace atgat
