// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atgat/grad_check.hpp"
#include "atgat/graph_data.hpp"
#include "atgat/models.hpp"

namespace atgat {

struct GradCase {
  std::string name;
  ad::ScalarFunction f;
  std::vector<Matrix> params;
};

struct GradCaseResult {
  std::string name;
  ad::GradCheckResult result;
};

/// Six-node labeled graph (two illicit) with four features over four time steps.
TransactionGraph grad_check_fixture();

/// Single-layer model with small dimensions used by the end-to-end cases.
ModelConfig grad_check_model(const ModelSpec& spec, std::size_t input_dim);

/// One case per differentiable operator, plus weighted BCE through every
/// model variant on the fixture (train mode, fixed dropout masks).
std::vector<GradCase> grad_check_cases(std::uint64_t seed = 0);

std::vector<GradCaseResult> run_grad_check_suite(double eps = 1e-6, std::uint64_t seed = 0);

}  // namespace atgat
