// SPDX-License-Identifier: Apache-2.0
#include "atgat/grad_suite.hpp"

#include <cmath>
#include <memory>

#include "atgat/rng.hpp"
#include "atgat/training.hpp"

namespace atgat {

namespace {

using ad::Var;

/// Uniform entries in [-2, 2].
Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.data) x = rng.uniform(-2.0, 2.0);
  return m;
}

/// Values bounded away from zero so kinked operators stay differentiable under perturbation.
Matrix away_from_zero(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.data) {
    const double mag = rng.uniform(0.2, 2.0);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return m;
}

Matrix positive_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = 0.3, double hi = 2.0) {
  Matrix m(rows, cols);
  for (double& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

/// Contracts an output against fixed random weights so every entry matters.
Var project(Var out, std::uint64_t seed) {
  Rng rng(seed, "grad.projection");
  return ad::sum(ad::mul(out, out.graph().constant(random_matrix(out.rows(), out.cols(), rng))));
}

}  // namespace

TransactionGraph grad_check_fixture() {
  std::vector<std::string> ids = {"a", "b", "c", "d", "e", "f"};
  Rng rng(7, "grad.fixture");
  Matrix features(6, 4);
  for (double& x : features.data) x = rng.normal();
  std::vector<std::int64_t> t = {1, 1, 2, 3, 3, 4};
  std::vector<Label> labels = {Label::licit, Label::illicit, Label::licit,
                               Label::licit, Label::illicit, Label::licit};
  std::vector<Edge> edges = {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {1, 4}, {3, 4}, {4, 5}, {2, 5}};
  return TransactionGraph(std::move(ids), std::move(features), std::move(t), std::move(labels),
                          std::move(edges));
}

ModelConfig grad_check_model(const ModelSpec& spec, std::size_t input_dim) {
  ModelConfig c;
  c.spec = spec;
  c.input_dim = input_dim;
  c.hidden_dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.head_dim = 4;
  c.fusion_hidden = 4;
  c.temporal.d_t = 8;
  c.temporal.d_pos = 4;
  return c;
}

std::vector<GradCase> grad_check_cases(std::uint64_t seed) {
  std::vector<GradCase> cases;
  Rng rng(seed, "grad.cases");
  const std::uint64_t ps = seed + 1;
  auto add = [&](std::string name, ad::ScalarFunction f, std::vector<Matrix> params) {
    cases.push_back({std::move(name), std::move(f), std::move(params)});
  };

  add("matmul", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::matmul(p[0], p[1]), ps); },
      {random_matrix(3, 4, rng), random_matrix(4, 2, rng)});
  add("add", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::add(p[0], p[1]), ps); },
      {random_matrix(3, 2, rng), random_matrix(3, 2, rng)});
  add("add_row", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::add_row(p[0], p[1]), ps); },
      {random_matrix(3, 2, rng), random_matrix(1, 2, rng)});
  add("sub", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::sub(p[0], p[1]), ps); },
      {random_matrix(3, 2, rng), random_matrix(3, 2, rng)});
  add("mul", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::mul(p[0], p[1]), ps); },
      {random_matrix(3, 2, rng), random_matrix(3, 2, rng)});
  add("mul_row", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::mul_row(p[0], p[1]), ps); },
      {random_matrix(3, 2, rng), random_matrix(1, 2, rng)});
  add("scale", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::scale(p[0], -1.7), ps); },
      {random_matrix(2, 3, rng)});
  add("affine", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::affine(p[0], 0.6, 2.0), ps); },
      {random_matrix(2, 3, rng)});
  add("concat_cols",
      [ps](ad::ValueGraph&, std::span<const Var> p) {
        const Var parts[] = {p[0], p[1], p[0]};
        return project(ad::concat_cols(parts), ps);
      },
      {random_matrix(3, 2, rng), random_matrix(3, 1, rng)});
  add("slice_cols", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::slice_cols(p[0], 1, 2), ps); },
      {random_matrix(3, 4, rng)});
  add("gather_rows",
      [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::gather_rows(p[0], {2, 0, 2, 1}), ps); },
      {random_matrix(3, 2, rng)});
  add("scatter_add_rows",
      [ps](ad::ValueGraph&, std::span<const Var> p) {
        return project(ad::scatter_add_rows(p[0], {1, 0, 1, 3}, 4), ps);
      },
      {random_matrix(4, 2, rng)});
  add("row_group_sum",
      [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::row_group_sum(p[0], 3), ps); },
      {random_matrix(2, 6, rng)});
  add("expand_groups",
      [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::expand_groups(p[0], 3), ps); },
      {random_matrix(2, 2, rng)});
  add("relu", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::relu(p[0]), ps); },
      {away_from_zero(3, 3, rng)});
  add("leaky_relu", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::leaky_relu(p[0], 0.2), ps); },
      {away_from_zero(3, 3, rng)});
  add("sigmoid", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::sigmoid(p[0]), ps); },
      {random_matrix(3, 3, rng)});
  add("log", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::log(p[0]), ps); },
      {positive_matrix(3, 3, rng)});
  add("sqrt", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::sqrt(p[0]), ps); },
      {positive_matrix(3, 3, rng)});
  add("clamp", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::clamp(p[0], -0.1, 0.1), ps); },
      {away_from_zero(3, 3, rng)});
  {
    Matrix inside(2, 3);
    for (double& x : inside.data) x = rng.uniform(-0.09, 0.09);
    add("clamp_inside",
        [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::clamp(p[0], -0.1, 0.1), ps); },
        {inside});
  }
  add("softmax_rows", [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::softmax_rows(p[0]), ps); },
      {random_matrix(3, 4, rng)});
  add("segment_softmax",
      [ps](ad::ValueGraph&, std::span<const Var> p) {
        return project(ad::segment_softmax(p[0], {0, 1, 0, 2, 1, 0}, 3), ps);
      },
      {random_matrix(6, 2, rng)});
  add("segment_normalize",
      [ps](ad::ValueGraph&, std::span<const Var> p) {
        return project(ad::segment_normalize(p[0], {0, 1, 0, 2, 1, 0}, 3), ps);
      },
      {positive_matrix(6, 2, rng)});
  add("layer_norm",
      [ps](ad::ValueGraph&, std::span<const Var> p) { return project(ad::layer_norm(p[0], p[1], p[2]), ps); },
      {random_matrix(3, 5, rng), random_matrix(1, 5, rng), random_matrix(1, 5, rng)});
  add("dropout",
      [ps](ad::ValueGraph&, std::span<const Var> p) {
        Rng mask(ps, "grad.dropout");
        return project(ad::dropout(p[0], 0.4, ad::Mode::train, mask), ps);
      },
      {random_matrix(4, 4, rng)});
  add("sum", [](ad::ValueGraph&, std::span<const Var> p) { return ad::sum(ad::mul(p[0], p[0])); },
      {random_matrix(2, 3, rng)});
  add("mean", [](ad::ValueGraph&, std::span<const Var> p) { return ad::mean(ad::mul(p[0], p[0])); },
      {random_matrix(2, 3, rng)});
  {
    Matrix probs(5, 1);
    for (double& x : probs.data) x = rng.uniform(0.05, 0.95);
    add("weighted_bce",
        [](ad::ValueGraph&, std::span<const Var> p) {
          const int labels[] = {1, 0, 0, 1, 0};
          return weighted_bce(p[0], labels, 2.5);
        },
        {probs});
  }

  // End to end: weighted BCE on the labeled fixture through each model variant.
  const TransactionGraph graph = grad_check_fixture();
  Index nodes(graph.num_nodes());
  for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = i;
  const std::vector<int> labels = binary_labels(graph, nodes);
  const double w_pos = class_weight(labels);
  for (const char* name : {"B-GAT", "S-GAT", "T-GAT", "ATGAT-W", "GCN-W", "LR-W"}) {
    ModelConfig config = grad_check_model(ModelSpec::parse(name), graph.feature_dim());
    if (config.spec.variant == Variant::atgat) config.share_temporal_embedding = false;
    const ModelParams init = init_params(config, seed);
    std::vector<Matrix> params;
    init.visit([&](const std::string&, const Matrix& m) { params.push_back(m); });
    auto inputs = std::make_shared<GraphInputs>(prepare_inputs(graph, config));
    add(std::string("model/") + name,
        [config, init, inputs, labels, w_pos, seed](ad::ValueGraph& g, std::span<const Var> p) {
          ModelWeights<Var> weights = init.map([](const Matrix&) { return Var(); });
          std::size_t k = 0;
          weights.visit([&](const std::string&, Var& v) { v = p[k++]; });
          Rng dropout_rng(seed, "grad.model.dropout");
          const Var probs = forward(g, weights, *inputs, config, ad::Mode::train, dropout_rng);
          return weighted_bce(probs, labels, config.spec.loss == LossMode::weighted ? w_pos : 1.0);
        },
        std::move(params));
  }
  return cases;
}

std::vector<GradCaseResult> run_grad_check_suite(double eps, std::uint64_t seed) {
  std::vector<GradCaseResult> out;
  for (GradCase& c : grad_check_cases(seed))
    out.push_back({c.name, ad::grad_check(c.f, std::move(c.params), eps)});
  return out;
}

}  // namespace atgat
