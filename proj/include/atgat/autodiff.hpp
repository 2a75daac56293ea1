// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense double matrices.
//
// A ValueGraph is an append-only tape. Every operator appends one record
// holding its forward value, the indices of its parents (always earlier
// records) and a closure that pushes the record's gradient into its parents.
// backward() sweeps the tape in reverse index order, so accumulation order
// is fixed and results are bit-reproducible.
//
// The operator set is closed: there is no broadcasting engine. Row-vector
// broadcasting exists only in add_row/mul_row, and per-head column
// grouping only in row_group_sum/expand_groups.
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "atgat/matrix.hpp"
#include "atgat/rng.hpp"

namespace atgat::ad {

enum class Op {
  constant,
  parameter,
  matmul,
  add,
  add_row,
  sub,
  mul,
  mul_row,
  scale,
  affine,
  concat_cols,
  slice_cols,
  gather_rows,
  scatter_add_rows,
  row_group_sum,
  expand_groups,
  relu,
  leaky_relu,
  sigmoid,
  log,
  sqrt,
  clamp,
  softmax_rows,
  segment_softmax,
  segment_normalize,
  layer_norm,
  dropout,
  sum,
  mean,
  custom,
};

std::string_view op_name(Op op);

class ValueGraph;

/// Handle to a record in a ValueGraph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(ValueGraph* graph, std::size_t id) : graph_(graph), id_(id) {}

  ValueGraph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }

 private:
  ValueGraph* graph_ = nullptr;
  std::size_t id_ = 0;
};

enum class Mode { train, eval };

class ValueGraph {
 public:
  /// Pushes the gradient of record `self` into its parents' gradient buffers.
  using BackwardFn = std::function<void(ValueGraph& graph, std::size_t self)>;

  ValueGraph() = default;
  ValueGraph(const ValueGraph&) = delete;
  ValueGraph& operator=(const ValueGraph&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient is wanted.
  Var parameter(Matrix value);

  /// Appends a record. Parents must already be in the graph. Public so that
  /// callers (and the gradient-check self tests) can register extra operators.
  Var record(Matrix value, Op op, std::vector<std::size_t> parents, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return records_.at(id).value; }
  const Matrix& grad(std::size_t id) const { return records_.at(id).grad; }
  /// Gradient buffer of a record; only meaningful inside a backward sweep.
  Matrix& grad_buffer(std::size_t id) { return records_[id].grad; }
  Op op(std::size_t id) const { return records_.at(id).op; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return records_.at(id).parents; }
  bool requires_grad(std::size_t id) const { return records_.at(id).requires_grad; }
  std::size_t size() const { return records_.size(); }

  /// Reverse sweep from a 1x1 loss record. Gradient buffers of every record
  /// are (re)initialized, so backward may be called more than once.
  void backward(Var loss);

 private:
  struct Record {
    Matrix value;
    Matrix grad;
    Op op = Op::constant;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::deque<Record> records_;  // references stay valid as the tape grows
};

using Index = std::vector<std::size_t>;

// --- Linear algebra ---------------------------------------------------------
Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// a (R x C) + row (1 x C), broadcast down the rows.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
/// a (R x C) * row (1 x C), broadcast down the rows.
Var mul_row(Var a, Var row);
Var scale(Var a, double factor);
/// factor * a + shift, elementwise.
Var affine(Var a, double factor, double shift);

// --- Shape and indexing ----------------------------------------------------
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
/// out[r] = a[index[r]]
Var gather_rows(Var a, const Index& index);
/// out[index[r]] += a[r]; out has `rows` rows.
Var scatter_add_rows(Var a, const Index& index, std::size_t rows);
/// Sums each contiguous block of `group` columns: R x (G*group) -> R x G.
Var row_group_sum(Var a, std::size_t group);
/// Repeats each column `group` times: R x G -> R x (G*group).
Var expand_groups(Var a, std::size_t group);

// --- Elementwise nonlinearities ----------------------------------------------
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
Var log(Var a);
Var sqrt(Var a);
/// Gradient passes where lo <= a <= hi.
Var clamp(Var a, double lo, double hi);

// --- Normalizations -------------------------------------------------------------
/// Softmax over each row.
Var softmax_rows(Var a);
/// Column-wise softmax within groups of rows sharing a segment id, using a
/// per-segment max shift. segments.size() must equal scores.rows().
Var segment_softmax(Var scores, const Index& segments, std::size_t num_segments);
/// Divides each entry by its column's sum over the same segment.
Var segment_normalize(Var a, const Index& segments, std::size_t num_segments);
/// Per-row normalization (biased variance) followed by gain and bias (1 x C each).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Inverted dropout. Identity (the same Var) in eval mode or when rate == 0.
Var dropout(Var x, double rate, Mode mode, Rng& rng);

// --- Reductions -------------------------------------------------------------------
Var sum(Var a);
Var mean(Var a);

}  // namespace atgat::ad
