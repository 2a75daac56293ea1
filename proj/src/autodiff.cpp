// SPDX-License-Identifier: Apache-2.0
#include "atgat/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace atgat::ad {

namespace {

[[noreturn]] void shape_error(std::string_view op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                              " vs " + b.shape_string());
}

ValueGraph& same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument("operands belong to different graphs");
  return a.graph();
}

void check_index(const Index& index, std::size_t bound, std::string_view op) {
  for (std::size_t i : index)
    if (i >= bound)
      throw std::invalid_argument(std::string(op) + ": index " + std::to_string(i) +
                                  " out of range " + std::to_string(bound));
}

template <class F>
Var unary(Var a, Op op, F&& derivative_from_in_out, Matrix out) {
  ValueGraph& g = a.graph();
  const std::size_t ia = a.id();
  return g.record(std::move(out), op, {ia},
                  [ia, d = std::forward<F>(derivative_from_in_out)](ValueGraph& g, std::size_t self) {
                    const Matrix& x = g.value(ia);
                    const Matrix& y = g.value(self);
                    const Matrix& gy = g.grad_buffer(self);
                    Matrix& gx = g.grad_buffer(ia);
                    for (std::size_t i = 0; i < x.data.size(); ++i)
                      gx.data[i] += gy.data[i] * d(x.data[i], y.data[i]);
                  });
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::add_row: return "add_row";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::mul_row: return "mul_row";
    case Op::scale: return "scale";
    case Op::affine: return "affine";
    case Op::concat_cols: return "concat_cols";
    case Op::slice_cols: return "slice_cols";
    case Op::gather_rows: return "gather_rows";
    case Op::scatter_add_rows: return "scatter_add_rows";
    case Op::row_group_sum: return "row_group_sum";
    case Op::expand_groups: return "expand_groups";
    case Op::relu: return "relu";
    case Op::leaky_relu: return "leaky_relu";
    case Op::sigmoid: return "sigmoid";
    case Op::log: return "log";
    case Op::sqrt: return "sqrt";
    case Op::clamp: return "clamp";
    case Op::softmax_rows: return "softmax_rows";
    case Op::segment_softmax: return "segment_softmax";
    case Op::segment_normalize: return "segment_normalize";
    case Op::layer_norm: return "layer_norm";
    case Op::dropout: return "dropout";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::custom: return "custom";
  }
  return "?";
}

const Matrix& Var::value() const { return graph_->value(id_); }
const Matrix& Var::grad() const { return graph_->grad(id_); }

// --- ValueGraph ---------------------------------------------------------------

Var ValueGraph::constant(Matrix value) { return record(std::move(value), Op::constant, {}, {}); }

Var ValueGraph::parameter(Matrix value) {
  Var v = record(std::move(value), Op::parameter, {}, {});
  records_.back().requires_grad = true;
  return v;
}

Var ValueGraph::record(Matrix value, Op op, std::vector<std::size_t> parents, BackwardFn backward) {
  if (value.data.size() != value.rows * value.cols)
    throw std::invalid_argument("record: payload size does not match shape");
  bool needs = false;
  for (std::size_t p : parents) {
    if (p >= records_.size()) throw std::invalid_argument("record: parent is not an earlier record");
    needs = needs || records_[p].requires_grad;
  }
  Record r;
  r.value = std::move(value);
  r.op = op;
  r.parents = std::move(parents);
  r.backward = std::move(backward);
  r.requires_grad = needs;
  records_.push_back(std::move(r));
  return Var(this, records_.size() - 1);
}

void ValueGraph::backward(Var loss) {
  if (&loss.graph() != this) throw std::invalid_argument("backward: loss belongs to another graph");
  const Matrix& lv = value(loss.id());
  if (lv.rows != 1 || lv.cols != 1)
    throw std::invalid_argument("backward: loss must be 1x1, got " + lv.shape_string());
  for (Record& r : records_) {
    r.grad.rows = r.value.rows;
    r.grad.cols = r.value.cols;
    r.grad.data.assign(r.value.data.size(), 0.0);
  }
  records_[loss.id()].grad.data[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Record& r = records_[i];
    if (!r.requires_grad || !r.backward) continue;
    r.backward(*this, i);
  }
}

// --- Linear algebra -------------------------------------------------------------

Var matmul(Var a, Var b) {
  ValueGraph& g = same_graph(a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(matmul_raw(a.value(), b.value()), Op::matmul, {ia, ib},
                  [ia, ib](ValueGraph& g, std::size_t self) {
                    const Matrix& gy = g.grad_buffer(self);
                    if (g.requires_grad(ia)) add_into(g.grad_buffer(ia), matmul_nt(gy, g.value(ib)));
                    if (g.requires_grad(ib)) add_into(g.grad_buffer(ib), matmul_tn(g.value(ia), gy));
                  });
}

Var add(Var a, Var b) {
  ValueGraph& g = same_graph(a, b);
  if (!a.value().same_shape(b.value())) shape_error("add", a.value(), b.value());
  Matrix out = a.value();
  add_into(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(std::move(out), Op::add, {ia, ib}, [ia, ib](ValueGraph& g, std::size_t self) {
    const Matrix& gy = g.grad_buffer(self);
    add_into(g.grad_buffer(ia), gy);
    add_into(g.grad_buffer(ib), gy);
  });
}

Var add_row(Var a, Var row) {
  ValueGraph& g = same_graph(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a.value(), row.value());
  Matrix out = a.value();
  const Matrix& r = row.value();
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += r.data[j];
  const std::size_t ia = a.id(), ir = row.id();
  return g.record(std::move(out), Op::add_row, {ia, ir}, [ia, ir](ValueGraph& g, std::size_t self) {
    const Matrix& gy = g.grad_buffer(self);
    add_into(g.grad_buffer(ia), gy);
    Matrix& gr = g.grad_buffer(ir);
    for (std::size_t i = 0; i < gy.rows; ++i)
      for (std::size_t j = 0; j < gy.cols; ++j) gr.data[j] += gy(i, j);
  });
}

Var sub(Var a, Var b) {
  ValueGraph& g = same_graph(a, b);
  if (!a.value().same_shape(b.value())) shape_error("sub", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(std::move(out), Op::sub, {ia, ib}, [ia, ib](ValueGraph& g, std::size_t self) {
    const Matrix& gy = g.grad_buffer(self);
    add_into(g.grad_buffer(ia), gy);
    Matrix& gb = g.grad_buffer(ib);
    for (std::size_t i = 0; i < gy.data.size(); ++i) gb.data[i] -= gy.data[i];
  });
}

Var mul(Var a, Var b) {
  ValueGraph& g = same_graph(a, b);
  if (!a.value().same_shape(b.value())) shape_error("mul", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(std::move(out), Op::mul, {ia, ib}, [ia, ib](ValueGraph& g, std::size_t self) {
    const Matrix& gy = g.grad_buffer(self);
    const Matrix& av = g.value(ia);
    const Matrix& bv = g.value(ib);
    if (g.requires_grad(ia)) {
      Matrix& ga = g.grad_buffer(ia);
      for (std::size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i] * bv.data[i];
    }
    if (g.requires_grad(ib)) {
      Matrix& gb = g.grad_buffer(ib);
      for (std::size_t i = 0; i < gy.data.size(); ++i) gb.data[i] += gy.data[i] * av.data[i];
    }
  });
}

Var mul_row(Var a, Var row) {
  ValueGraph& g = same_graph(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("mul_row", a.value(), row.value());
  Matrix out = a.value();
  const Matrix& r = row.value();
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) *= r.data[j];
  const std::size_t ia = a.id(), ir = row.id();
  return g.record(std::move(out), Op::mul_row, {ia, ir}, [ia, ir](ValueGraph& g, std::size_t self) {
    const Matrix& gy = g.grad_buffer(self);
    const Matrix& av = g.value(ia);
    const Matrix& rv = g.value(ir);
    if (g.requires_grad(ia)) {
      Matrix& ga = g.grad_buffer(ia);
      for (std::size_t i = 0; i < gy.rows; ++i)
        for (std::size_t j = 0; j < gy.cols; ++j) ga(i, j) += gy(i, j) * rv.data[j];
    }
    if (g.requires_grad(ir)) {
      Matrix& gr = g.grad_buffer(ir);
      for (std::size_t i = 0; i < gy.rows; ++i)
        for (std::size_t j = 0; j < gy.cols; ++j) gr.data[j] += gy(i, j) * av(i, j);
    }
  });
}

Var scale(Var a, double factor) { return affine(a, factor, 0.0); }

Var affine(Var a, double factor, double shift) {
  Matrix out = a.value();
  for (double& v : out.data) v = factor * v + shift;
  return unary(a, shift == 0.0 ? Op::scale : Op::affine,
               [factor](double, double) { return factor; }, std::move(out));
}

// --- Shape and indexing ------------------------------------------------------------

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  ValueGraph& g = parts.front().graph();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw std::invalid_argument("concat_cols: operands from different graphs");
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    ids.push_back(p.id());
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(v.row(i).begin(), v.row(i).end(), out.row(i).begin() + offset);
    offset += v.cols;
  }
  return g.record(std::move(out), Op::concat_cols, ids, [ids](ValueGraph& g, std::size_t self) {
    const Matrix& gy = g.grad_buffer(self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      Matrix& gp = g.grad_buffer(id);
      for (std::size_t i = 0; i < gp.rows; ++i)
        for (std::size_t j = 0; j < gp.cols; ++j) gp(i, j) += gy(i, offset + j);
      offset += gp.cols;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols())
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") exceeds " +
                                a.value().shape_string());
  const Matrix& v = a.value();
  Matrix out(v.rows, count);
  for (std::size_t i = 0; i < v.rows; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = v(i, begin + j);
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), Op::slice_cols, {ia},
                          [ia, begin](ValueGraph& g, std::size_t self) {
                            const Matrix& gy = g.grad_buffer(self);
                            Matrix& ga = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < gy.rows; ++i)
                              for (std::size_t j = 0; j < gy.cols; ++j) ga(i, begin + j) += gy(i, j);
                          });
}

Var gather_rows(Var a, const Index& index) {
  check_index(index, a.rows(), "gather_rows");
  const Matrix& v = a.value();
  Matrix out(index.size(), v.cols);
  for (std::size_t r = 0; r < index.size(); ++r)
    std::copy(v.row(index[r]).begin(), v.row(index[r]).end(), out.row(r).begin());
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), Op::gather_rows, {ia},
                          [ia, index](ValueGraph& g, std::size_t self) {
                            const Matrix& gy = g.grad_buffer(self);
                            Matrix& ga = g.grad_buffer(ia);
                            for (std::size_t r = 0; r < index.size(); ++r) {
                              auto dst = ga.row(index[r]);
                              auto src = gy.row(r);
                              for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                            }
                          });
}

Var scatter_add_rows(Var a, const Index& index, std::size_t rows) {
  if (index.size() != a.rows())
    throw std::invalid_argument("scatter_add_rows: index length " + std::to_string(index.size()) +
                                " != rows " + std::to_string(a.rows()));
  check_index(index, rows, "scatter_add_rows");
  const Matrix& v = a.value();
  Matrix out(rows, v.cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    auto dst = out.row(index[r]);
    auto src = v.row(r);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), Op::scatter_add_rows, {ia},
                          [ia, index](ValueGraph& g, std::size_t self) {
                            const Matrix& gy = g.grad_buffer(self);
                            Matrix& ga = g.grad_buffer(ia);
                            for (std::size_t r = 0; r < index.size(); ++r) {
                              auto dst = ga.row(r);
                              auto src = gy.row(index[r]);
                              for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                            }
                          });
}

Var row_group_sum(Var a, std::size_t group) {
  if (group == 0 || a.cols() % group != 0)
    throw std::invalid_argument("row_group_sum: " + std::to_string(a.cols()) +
                                " columns not divisible by group " + std::to_string(group));
  const Matrix& v = a.value();
  const std::size_t groups = v.cols / group;
  Matrix out(v.rows, groups);
  for (std::size_t i = 0; i < v.rows; ++i)
    for (std::size_t h = 0; h < groups; ++h) {
      double acc = 0.0;
      for (std::size_t k = 0; k < group; ++k) acc += v(i, h * group + k);
      out(i, h) = acc;
    }
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), Op::row_group_sum, {ia},
                          [ia, group](ValueGraph& g, std::size_t self) {
                            const Matrix& gy = g.grad_buffer(self);
                            Matrix& ga = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < ga.rows; ++i)
                              for (std::size_t j = 0; j < ga.cols; ++j) ga(i, j) += gy(i, j / group);
                          });
}

Var expand_groups(Var a, std::size_t group) {
  if (group == 0) throw std::invalid_argument("expand_groups: group must be positive");
  const Matrix& v = a.value();
  Matrix out(v.rows, v.cols * group);
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) = v(i, j / group);
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), Op::expand_groups, {ia},
                          [ia, group](ValueGraph& g, std::size_t self) {
                            const Matrix& gy = g.grad_buffer(self);
                            Matrix& ga = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < gy.rows; ++i)
                              for (std::size_t j = 0; j < gy.cols; ++j) ga(i, j / group) += gy(i, j);
                          });
}

// --- Elementwise -----------------------------------------------------------------------

Var relu(Var a) {
  Matrix out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return unary(a, Op::relu, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, std::move(out));
}

Var leaky_relu(Var a, double slope) {
  Matrix out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : slope * v;
  return unary(a, Op::leaky_relu, [slope](double x, double) { return x > 0.0 ? 1.0 : slope; },
               std::move(out));
}

Var sigmoid(Var a) {
  Matrix out = a.value();
  for (double& v : out.data)
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return unary(a, Op::sigmoid, [](double, double y) { return y * (1.0 - y); }, std::move(out));
}

Var log(Var a) {
  Matrix out = a.value();
  for (double& v : out.data) v = std::log(v);
  return unary(a, Op::log, [](double x, double) { return 1.0 / x; }, std::move(out));
}

Var sqrt(Var a) {
  Matrix out = a.value();
  for (double& v : out.data) v = std::sqrt(v);
  return unary(a, Op::sqrt, [](double, double y) { return 0.5 / y; }, std::move(out));
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  Matrix out = a.value();
  for (double& v : out.data) v = std::clamp(v, lo, hi);
  return unary(a, Op::clamp, [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; },
               std::move(out));
}

// --- Normalizations ----------------------------------------------------------------------

Var softmax_rows(Var a) {
  const Matrix& v = a.value();
  Matrix out(v.rows, v.cols);
  for (std::size_t i = 0; i < v.rows; ++i) {
    auto in = v.row(i);
    auto y = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) total += (y[j] = std::exp(in[j] - mx));
    for (double& e : y) e /= total;
  }
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), Op::softmax_rows, {ia},
                          [ia](ValueGraph& g, std::size_t self) {
                            const Matrix& y = g.value(self);
                            const Matrix& gy = g.grad_buffer(self);
                            Matrix& ga = g.grad_buffer(ia);
                            for (std::size_t i = 0; i < y.rows; ++i) {
                              double dot = 0.0;
                              for (std::size_t j = 0; j < y.cols; ++j) dot += gy(i, j) * y(i, j);
                              for (std::size_t j = 0; j < y.cols; ++j)
                                ga(i, j) += y(i, j) * (gy(i, j) - dot);
                            }
                          });
}

namespace {

void check_segments(const Index& segments, std::size_t rows, std::size_t num_segments,
                    std::string_view op) {
  if (segments.size() != rows)
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(segments.size()) +
                                " segment ids for " + std::to_string(rows) + " rows");
  check_index(segments, num_segments, op);
}

}  // namespace

Var segment_softmax(Var scores, const Index& segments, std::size_t num_segments) {
  const Matrix& s = scores.value();
  check_segments(segments, s.rows, num_segments, "segment_softmax");
  const std::size_t cols = s.cols;
  Matrix mx(num_segments, cols, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mx(segments[r], c) = std::max(mx(segments[r], c), s(r, c));
  Matrix out(s.rows, cols);
  Matrix total(num_segments, cols);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = std::exp(s(r, c) - mx(segments[r], c));
      out(r, c) = e;
      total(segments[r], c) += e;
    }
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= total(segments[r], c);
  const std::size_t is = scores.id();
  return scores.graph().record(
      std::move(out), Op::segment_softmax, {is},
      [is, segments, num_segments](ValueGraph& g, std::size_t self) {
        const Matrix& y = g.value(self);
        const Matrix& gy = g.grad_buffer(self);
        Matrix& gs = g.grad_buffer(is);
        Matrix dot(num_segments, y.cols);
        for (std::size_t r = 0; r < y.rows; ++r)
          for (std::size_t c = 0; c < y.cols; ++c) dot(segments[r], c) += gy(r, c) * y(r, c);
        for (std::size_t r = 0; r < y.rows; ++r)
          for (std::size_t c = 0; c < y.cols; ++c)
            gs(r, c) += y(r, c) * (gy(r, c) - dot(segments[r], c));
      });
}

Var segment_normalize(Var a, const Index& segments, std::size_t num_segments) {
  const Matrix& v = a.value();
  check_segments(segments, v.rows, num_segments, "segment_normalize");
  auto totals = std::make_shared<Matrix>(num_segments, v.cols);
  for (std::size_t r = 0; r < v.rows; ++r)
    for (std::size_t c = 0; c < v.cols; ++c) (*totals)(segments[r], c) += v(r, c);
  Matrix out(v.rows, v.cols);
  for (std::size_t r = 0; r < v.rows; ++r)
    for (std::size_t c = 0; c < v.cols; ++c) out(r, c) = v(r, c) / (*totals)(segments[r], c);
  const std::size_t ia = a.id();
  return a.graph().record(
      std::move(out), Op::segment_normalize, {ia},
      [ia, segments, num_segments, totals](ValueGraph& g, std::size_t self) {
        const Matrix& y = g.value(self);
        const Matrix& gy = g.grad_buffer(self);
        Matrix& ga = g.grad_buffer(ia);
        Matrix dot(num_segments, y.cols);
        for (std::size_t r = 0; r < y.rows; ++r)
          for (std::size_t c = 0; c < y.cols; ++c) dot(segments[r], c) += gy(r, c) * y(r, c);
        for (std::size_t r = 0; r < y.rows; ++r)
          for (std::size_t c = 0; c < y.cols; ++c) {
            const std::size_t s = segments[r];
            ga(r, c) += (gy(r, c) - dot(s, c)) / (*totals)(s, c);
          }
      });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  ValueGraph& g = same_graph(x, gain);
  same_graph(x, bias);
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be > 0");
  const Matrix& v = x.value();
  if (gain.rows() != 1 || gain.cols() != v.cols) shape_error("layer_norm gain", v, gain.value());
  if (bias.rows() != 1 || bias.cols() != v.cols) shape_error("layer_norm bias", v, bias.value());
  const std::size_t n = v.cols;
  auto xhat = std::make_shared<Matrix>(v.rows, n);
  auto inv_std = std::make_shared<std::vector<double>>(v.rows);
  Matrix out(v.rows, n);
  for (std::size_t i = 0; i < v.rows; ++i) {
    auto row = v.row(i);
    double mu = 0.0;
    for (double e : row) mu += e;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double e : row) var += (e - mu) * (e - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * inv;
      (*xhat)(i, j) = h;
      out(i, j) = gain.value().data[j] * h + bias.value().data[j];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return g.record(std::move(out), Op::layer_norm, {ix, ig, ib},
                  [ix, ig, ib, xhat, inv_std](ValueGraph& g, std::size_t self) {
                    const Matrix& gy = g.grad_buffer(self);
                    const Matrix& gain = g.value(ig);
                    const std::size_t n = gy.cols;
                    Matrix& gg = g.grad_buffer(ig);
                    Matrix& gb = g.grad_buffer(ib);
                    for (std::size_t i = 0; i < gy.rows; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        gg.data[j] += gy(i, j) * (*xhat)(i, j);
                        gb.data[j] += gy(i, j);
                      }
                    if (!g.requires_grad(ix)) return;
                    Matrix& gx = g.grad_buffer(ix);
                    std::vector<double> dh(n);
                    for (std::size_t i = 0; i < gy.rows; ++i) {
                      double mean_dh = 0.0, mean_dh_h = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        dh[j] = gy(i, j) * gain.data[j];
                        mean_dh += dh[j];
                        mean_dh_h += dh[j] * (*xhat)(i, j);
                      }
                      mean_dh /= static_cast<double>(n);
                      mean_dh_h /= static_cast<double>(n);
                      for (std::size_t j = 0; j < n; ++j)
                        gx(i, j) += (*inv_std)[i] * (dh[j] - mean_dh - (*xhat)(i, j) * mean_dh_h);
                    }
                  });
}

Var dropout(Var x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out.data[i] *= (*mask)[i];
  }
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), Op::dropout, {ix}, [ix, mask](ValueGraph& g, std::size_t self) {
    const Matrix& gy = g.grad_buffer(self);
    Matrix& gx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < gy.data.size(); ++i) gx.data[i] += gy.data[i] * (*mask)[i];
  });
}

// --- Reductions ---------------------------------------------------------------------------

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data) total += v;
  const std::size_t ia = a.id();
  return a.graph().record(Matrix(1, 1, total), Op::sum, {ia}, [ia](ValueGraph& g, std::size_t self) {
    const double gy = g.grad_buffer(self).data[0];
    for (double& v : g.grad_buffer(ia).data) v += gy;
  });
}

Var mean(Var a) {
  if (a.value().empty()) throw std::invalid_argument("mean: empty input");
  const double n = static_cast<double>(a.value().size());
  double total = 0.0;
  for (double v : a.value().data) total += v;
  const std::size_t ia = a.id();
  return a.graph().record(Matrix(1, 1, total / n), Op::mean, {ia},
                          [ia, n](ValueGraph& g, std::size_t self) {
                            const double gy = g.grad_buffer(self).data[0] / n;
                            for (double& v : g.grad_buffer(ia).data) v += gy;
                          });
}

}  // namespace atgat::ad
