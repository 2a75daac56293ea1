// SPDX-License-Identifier: Apache-2.0
#include "atgat/temporal_embedding.hpp"

#include <cmath>
#include <stdexcept>

namespace atgat {

void TemporalEmbeddingConfig::validate() const {
  if (d_t < 4) throw std::invalid_argument("temporal embedding: d_t must be >= 4");
  if (d_pos == 0 || d_pos % 2 != 0)
    throw std::invalid_argument("temporal embedding: d_pos must be a positive even number");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("temporal embedding: dropout must be in [0, 1)");
}

TemporalEmbeddingParams make_temporal_weights(const TemporalEmbeddingConfig& c) {
  c.validate();
  TemporalEmbeddingParams w;
  w.w_delta = Matrix(1, c.d1());
  w.b_delta = Matrix(1, c.d1());
  w.w_ms = Matrix(3, c.d3());
  w.b_ms = Matrix(1, c.d3());
  w.w_pe = Matrix(2 * c.d_pos, c.d2());
  w.b_pe = Matrix(1, c.d2());
  w.w_fuse = Matrix(c.concat_width(), c.d_t);
  w.b_fuse = Matrix(1, c.d_t);
  w.ln_gain = Matrix(1, c.d_t, 1.0);
  w.ln_bias = Matrix(1, c.d_t);
  return w;
}

void check_temporal_weights(const TemporalEmbeddingParams& w, const TemporalEmbeddingConfig& c) {
  const TemporalEmbeddingParams expected = make_temporal_weights(c);
  expected.visit([&](const char* name, const Matrix& e) {
    const Matrix* actual = nullptr;
    w.visit([&](const char* n, const Matrix& m) {
      if (std::string_view(n) == name) actual = &m;
    });
    if (!actual->same_shape(e))
      throw std::invalid_argument(std::string("temporal embedding weight ") + name + " has shape " +
                                  actual->shape_string() + ", expected " + e.shape_string());
  });
}

std::vector<double> basic_delta_projection(double dt, const TemporalEmbeddingParams& w) {
  if (!(dt >= 0.0)) throw std::invalid_argument("basic_delta_projection: negative time delta");
  std::vector<double> out(w.w_delta.cols);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = w.w_delta(0, k) * dt + w.b_delta(0, k);
  return out;
}

std::array<double, 3> multiscale_features(double dt) {
  if (!(dt >= 0.0)) throw std::invalid_argument("multiscale_features: negative time delta");
  return {dt, std::log(dt + 1.0), std::sqrt(dt + 1.0)};
}

std::vector<double> positional_encoding(double t, std::size_t d_pos) {
  if (d_pos % 2 != 0) throw std::invalid_argument("positional_encoding: d_pos must be even");
  if (!(t >= 0.0)) throw std::invalid_argument("positional_encoding: negative timestamp");
  std::vector<double> pe(d_pos);
  for (std::size_t k = 0; 2 * k < d_pos; ++k) {
    const double freq = std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(d_pos));
    pe[2 * k] = std::sin(t / freq);
    pe[2 * k + 1] = std::cos(t / freq);
  }
  return pe;
}

TemporalInputs make_temporal_inputs(std::span<const std::int64_t> t_src,
                                    std::span<const std::int64_t> t_dst, std::size_t d_pos) {
  if (t_src.size() != t_dst.size())
    throw std::invalid_argument("make_temporal_inputs: timestamp spans differ in length");
  const std::size_t e = t_src.size();
  TemporalInputs in{Matrix(e, 1), Matrix(e, 3), Matrix(e, 2 * d_pos)};
  for (std::size_t i = 0; i < e; ++i) {
    const std::int64_t diff = t_src[i] - t_dst[i];
    const double dt = static_cast<double>(diff < 0 ? -diff : diff);
    in.delta(i, 0) = dt;
    const auto ms = multiscale_features(dt);
    for (std::size_t k = 0; k < 3; ++k) in.multiscale(i, k) = ms[k];
    const auto pe_src = positional_encoding(static_cast<double>(t_src[i]), d_pos);
    const auto pe_dst = positional_encoding(static_cast<double>(t_dst[i]), d_pos);
    for (std::size_t k = 0; k < d_pos; ++k) {
      in.positional(i, k) = pe_src[k];
      in.positional(i, d_pos + k) = pe_dst[k];
    }
  }
  return in;
}

TemporalComponents temporal_components(ad::ValueGraph& graph, const TemporalInputs& inputs,
                                       const TemporalEmbeddingWeights<ad::Var>& w) {
  using namespace ad;
  const Var delta = graph.constant(inputs.delta);
  const Var ms = graph.constant(inputs.multiscale);
  const Var pe = graph.constant(inputs.positional);
  return {add_row(matmul(delta, w.w_delta), w.b_delta), add_row(matmul(pe, w.w_pe), w.b_pe),
          add_row(matmul(ms, w.w_ms), w.b_ms)};
}

ad::Var temporal_embedding(ad::ValueGraph& graph, const TemporalInputs& inputs,
                           const TemporalEmbeddingWeights<ad::Var>& w,
                           const TemporalEmbeddingConfig& config, ad::Mode mode, Rng& rng) {
  using namespace ad;
  const TemporalComponents parts = temporal_components(graph, inputs, w);
  const Var joined = concat_cols(std::vector<Var>{parts.delta, parts.positional, parts.multiscale});
  const Var fused = add_row(matmul(joined, w.w_fuse), w.b_fuse);
  return dropout(relu(layer_norm(fused, w.ln_gain, w.ln_bias)), config.dropout, mode, rng);
}

}  // namespace atgat
