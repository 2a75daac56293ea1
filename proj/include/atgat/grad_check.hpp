// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "atgat/autodiff.hpp"

namespace atgat::ad {

/// Builds a scalar (1x1) record from parameter leaves registered in `graph`.
using ScalarFunction = std::function<Var(ValueGraph& graph, std::span<const Var> params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  /// Coordinate of the worst entry (or of the first non-finite numeric gradient).
  std::size_t param = 0;
  std::size_t entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool finite = true;
  std::string message;

  bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

/// Compares reverse-mode gradients against central differences. The error
/// per entry is |a - n| / max(1e-8, |a| + |n|); the maximum is returned.
GradCheckResult grad_check(const ScalarFunction& f, std::vector<Matrix> params, double eps = 1e-6);

}  // namespace atgat::ad
