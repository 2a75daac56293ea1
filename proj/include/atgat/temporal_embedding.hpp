// SPDX-License-Identifier: Apache-2.0
//
// Per-edge temporal embedding. For an edge (src -> dst) with timestamps
// (t_src, t_dst) and delta = |t_src - t_dst| the embedding is
//
//   concat[ delta projection        (d1 = d_t/4),
//           reduced PE(t_src)|PE(t_dst)  (d2 = d_t/2),
//           projected multi-scale features of delta (d3 = d_t/4) ]
//   -> linear to d_t -> layer norm -> relu -> dropout
//
// Linear maps are stored input-major (in x out) and applied as x * W + b.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "atgat/autodiff.hpp"
#include "atgat/matrix.hpp"

namespace atgat {

struct TemporalEmbeddingConfig {
  std::size_t d_t = 32;
  std::size_t d_pos = 16;
  double dropout = 0.1;

  std::size_t d1() const { return d_t / 4; }
  std::size_t d2() const { return d_t / 2; }
  std::size_t d3() const { return d_t / 4; }
  /// Width of the pre-fusion concatenation; equals d_t when 4 divides d_t.
  std::size_t concat_width() const { return d1() + d2() + d3(); }

  /// Throws std::invalid_argument unless d_t >= 4, d_pos is even and positive
  /// and 0 <= dropout < 1.
  void validate() const;
};

template <class T>
struct TemporalEmbeddingWeights {
  T w_delta;  // 1 x d1
  T b_delta;  // 1 x d1
  T w_ms;     // 3 x d3
  T b_ms;     // 1 x d3
  T w_pe;     // 2*d_pos x d2
  T b_pe;     // 1 x d2
  T w_fuse;   // (d1+d2+d3) x d_t
  T b_fuse;   // 1 x d_t
  T ln_gain;  // 1 x d_t
  T ln_bias;  // 1 x d_t

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
    using U = decltype(f(w_delta));
    return TemporalEmbeddingWeights<U>{f(w_delta), f(b_delta), f(w_ms),   f(b_ms),    f(w_pe),
                                       f(b_pe),    f(w_fuse),  f(b_fuse), f(ln_gain), f(ln_bias)};
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f("w_delta", s.w_delta);
    f("b_delta", s.b_delta);
    f("w_ms", s.w_ms);
    f("b_ms", s.b_ms);
    f("w_pe", s.w_pe);
    f("b_pe", s.b_pe);
    f("w_fuse", s.w_fuse);
    f("b_fuse", s.b_fuse);
    f("ln_gain", s.ln_gain);
    f("ln_bias", s.ln_bias);
  }
};

using TemporalEmbeddingParams = TemporalEmbeddingWeights<Matrix>;

/// Zero-filled weights with the shapes implied by `config`.
TemporalEmbeddingParams make_temporal_weights(const TemporalEmbeddingConfig& config);
/// Throws std::invalid_argument when any weight shape disagrees with `config`.
void check_temporal_weights(const TemporalEmbeddingParams& w, const TemporalEmbeddingConfig& config);

// --- Scalar reference forms ---------------------------------------------------------

/// W_delta * [dt] + b_delta. dt must be >= 0.
std::vector<double> basic_delta_projection(double dt, const TemporalEmbeddingParams& w);
/// (dt, ln(dt + 1), sqrt(dt + 1)). dt must be >= 0.
std::array<double, 3> multiscale_features(double dt);
/// Sinusoidal encoding: entry 2k = sin(t / 10000^(2k/d_pos)), 2k+1 = cos(...).
std::vector<double> positional_encoding(double t, std::size_t d_pos);

// --- Batched, differentiable form --------------------------------------------------

/// Constant per-edge inputs; they depend only on timestamps and so are built
/// once per graph.
struct TemporalInputs {
  Matrix delta;       // E x 1
  Matrix multiscale;  // E x 3
  Matrix positional;  // E x 2*d_pos, PE(t_src) then PE(t_dst)
};

TemporalInputs make_temporal_inputs(std::span<const std::int64_t> t_src,
                                    std::span<const std::int64_t> t_dst, std::size_t d_pos);

/// Pre-fusion components, exposed for inspection.
struct TemporalComponents {
  ad::Var delta;       // E x d1
  ad::Var positional;  // E x d2
  ad::Var multiscale;  // E x d3
};

TemporalComponents temporal_components(ad::ValueGraph& graph, const TemporalInputs& inputs,
                                       const TemporalEmbeddingWeights<ad::Var>& w);

/// E x d_t embedding. Non-negative before dropout (post-relu).
ad::Var temporal_embedding(ad::ValueGraph& graph, const TemporalInputs& inputs,
                           const TemporalEmbeddingWeights<ad::Var>& w,
                           const TemporalEmbeddingConfig& config, ad::Mode mode, Rng& rng);

}  // namespace atgat
