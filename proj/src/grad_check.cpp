// SPDX-License-Identifier: Apache-2.0
#include "atgat/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace atgat::ad {

namespace {

double evaluate(const ScalarFunction& f, const std::vector<Matrix>& params) {
  ValueGraph g;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(g.parameter(p));
  Var out = f(g, leaves);
  if (out.rows() != 1 || out.cols() != 1)
    throw std::invalid_argument("grad_check: function must return a 1x1 record");
  return out.value().data[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& f, std::vector<Matrix> params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be > 0");

  std::vector<Matrix> analytic;
  {
    ValueGraph g;
    std::vector<Var> leaves;
    for (const Matrix& p : params) leaves.push_back(g.parameter(p));
    Var out = f(g, leaves);
    g.backward(out);
    for (const Var& v : leaves) analytic.push_back(v.grad());
  }

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t e = 0; e < params[p].data.size(); ++e) {
      const double original = params[p].data[e];
      params[p].data[e] = original + eps;
      const double up = evaluate(f, params);
      params[p].data[e] = original - eps;
      const double down = evaluate(f, params);
      params[p].data[e] = original;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p].data[e];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        result.finite = false;
        result.param = p;
        result.entry = e;
        result.analytic = a;
        result.numeric = numeric;
        result.max_rel_error = std::numeric_limits<double>::infinity();
        result.message = "non-finite gradient at param " + std::to_string(p) + " entry " +
                         std::to_string(e);
        return result;
      }
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (err > result.max_rel_error || (p == 0 && e == 0)) {
        result.max_rel_error = err;
        result.param = p;
        result.entry = e;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace atgat::ad
