// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "atgat/grad_check.hpp"
#include "atgat/training.hpp"
#include "support.hpp"

using namespace atgat;

namespace {

std::vector<int> labels_with(std::size_t neg, std::size_t pos) {
  std::vector<int> y(neg, 0);
  y.insert(y.end(), pos, 1);
  return y;
}

// 20 nodes, two features; illicit nodes sit at +1 on the first feature and
// licit at -1, so a linear readout separates them.
TransactionGraph separable_toy() {
  Rng rng(77, "toy");
  std::vector<std::string> ids;
  std::vector<std::int64_t> ts;
  std::vector<Label> labels;
  Matrix x(20, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    ids.push_back("t" + std::to_string(i));
    ts.push_back(1 + static_cast<std::int64_t>(i / 4));
    const bool bad = i % 4 == 0;
    labels.push_back(bad ? Label::illicit : Label::licit);
    x(i, 0) = (bad ? 1.0 : -1.0) + 0.2 * rng.normal();
    x(i, 1) = rng.normal();
  }
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < 20; ++i) edges.push_back({i - 1, i});
  for (std::size_t i = 0; i + 5 < 20; i += 3) edges.push_back({i + 5, i});
  return TransactionGraph(std::move(ids), std::move(x), std::move(ts), std::move(labels), std::move(edges));
}

SplitAssignment toy_split() {
  SplitAssignment s;
  for (std::size_t i = 0; i < 20; ++i) (i % 5 == 3 ? s.val : s.train).push_back(i);
  return s;
}

ModelConfig toy_model(const std::string& name) {
  ModelConfig c;
  c.spec = ModelSpec::parse(name);
  c.input_dim = 2;
  c.hidden_dim = 16;
  c.heads = 2;
  c.head_dim = 8;
  c.fusion_hidden = 8;
  c.temporal.d_t = 8;
  c.temporal.d_pos = 4;
  return c;
}

}  // namespace

TEST(ClassWeight, Examples) {
  EXPECT_NEAR(class_weight(labels_with(42019, 4545)), 9.2451, 1e-4);
  EXPECT_EQ(class_weight(labels_with(42019, 4545)), 42019.0 / 4545.0);
  EXPECT_EQ(class_weight(labels_with(5, 5)), 1.0);
  EXPECT_EQ(class_weight(labels_with(9, 1)), 9.0);
  try {
    class_weight(labels_with(4, 0));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("plain"), std::string::npos) << e.what();
  }
  EXPECT_THROW(class_weight(labels_with(0, 3)), std::invalid_argument);
}

TEST(WeightedBce, Examples) {
  const std::vector<double> half{0.5};
  const std::vector<int> one{1};
  EXPECT_NEAR(weighted_bce_value(half, one, 1.0), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(weighted_bce_value(half, one, 2.0), 2.0 * std::numbers::ln2, 1e-15);
  ad::ValueGraph g;
  EXPECT_NEAR(weighted_bce(g.constant(Matrix(1, 1, 0.5)), one, 2.0).value()(0, 0), 2.0 * std::numbers::ln2, 1e-15);
  // clamp keeps the loss finite at the ends
  const std::vector<double> ends{0.0, 1.0};
  const std::vector<int> wrong{1, 0};
  EXPECT_NEAR(bce_value(ends, wrong), -std::log(kProbClamp), 1e-6);
  EXPECT_THROW(bce_value(ends, one), std::invalid_argument);
}

TEST(WeightedBce, UnitWeightEqualsPlainExactly) {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<double> p(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform();
      y[i] = rng.uniform() < 0.3;
    }
    if (trial % 10 == 0) p[0] = trial % 20 == 0 ? 0.0 : 1.0;
    const double plain = bce_value(p, y);
    EXPECT_EQ(weighted_bce_value(p, y, 1.0), plain);
    ad::ValueGraph g;
    EXPECT_EQ(weighted_bce(g.constant(Matrix::column(p)), y, 1.0).value()(0, 0), plain);
  }
}

TEST(WeightedBce, DerivativeMatchesFiniteDifferences) {
  Rng rng(14);
  std::vector<int> y(12);
  Matrix p(12, 1);
  for (std::size_t i = 0; i < 12; ++i) {
    y[i] = i % 3 == 0;
    p(i, 0) = rng.uniform(0.05, 0.95);
  }
  const auto f = [&](ad::ValueGraph&, std::span<const ad::Var> v) { return weighted_bce(v[0], y, 4.5); };
  const auto r = ad::grad_check(f, {p});
  EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
}

TEST(CosineLr, EndpointsAndMonotone) {
  for (std::size_t total : {1u, 2u, 10u, 170u, 171u}) {
    EXPECT_EQ(cosine_lr(0, total, 0.005), 0.005);
    EXPECT_EQ(cosine_lr(total, total, 0.005), 0.0);
    double prev = 1.0;
    for (std::size_t e = 0; e <= total; ++e) {
      const double lr = cosine_lr(e, total, 0.005);
      EXPECT_LE(lr, prev);
      EXPECT_GE(lr, 0.0);
      prev = lr;
    }
  }
  EXPECT_NEAR(cosine_lr(85, 170, 0.005), 0.0025, 1e-12);
  EXPECT_THROW(cosine_lr(171, 170, 0.005), std::out_of_range);
}

TEST(AdamW, FirstStepClosedForm) {
  Rng rng(15);
  Matrix p = fixtures::random_matrix(rng, 4, 5), g = fixtures::random_matrix(rng, 4, 5, -3, 3);
  const Matrix before = p;
  OptimizerState state;
  AdamWHyper hyper;
  hyper.weight_decay = 0.0;
  Matrix* ps[] = {&p};
  const Matrix* gs[] = {&g};
  adamw_step(ps, gs, state, 0.01, hyper);
  EXPECT_EQ(state.step, 1u);
  ASSERT_EQ(state.m.size(), 1u);
  EXPECT_TRUE(state.m[0].same_shape(p));
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double gk = g.data[k];
    EXPECT_NEAR(p.data[k], before.data[k] - 0.01 * gk / (std::abs(gk) + 1e-8), 1e-9);
    // roughly a signed step of size lr; eps costs lr * eps / |g|
    EXPECT_NEAR(p.data[k] - before.data[k], -0.01 * (gk > 0 ? 1 : -1), 0.01 * 1e-8 / std::abs(gk) + 1e-15);
  }
}

TEST(AdamW, ZeroGradientCases) {
  Matrix p = Matrix::from_rows({{1.5, -2.0}}), zero(1, 2);
  Matrix* ps[] = {&p};
  const Matrix* gs[] = {&zero};
  OptimizerState state;
  AdamWHyper hyper;
  hyper.weight_decay = 0.0;
  adamw_step(ps, gs, state, 0.1, hyper);
  EXPECT_EQ(p, Matrix::from_rows({{1.5, -2.0}}));
  hyper.weight_decay = 0.5;
  OptimizerState fresh;
  adamw_step(ps, gs, fresh, 0.1, hyper);
  EXPECT_EQ(p, Matrix::from_rows({{1.5 * 0.95, -2.0 * 0.95}}));
}

TEST(AdamW, SecondStepAgainstScalarRecurrence) {
  Matrix p(1, 1, 0.3), g1(1, 1, 0.7), g2(1, 1, -0.2);
  Matrix* ps[] = {&p};
  OptimizerState state;
  const AdamWHyper h;
  const Matrix* first[] = {&g1};
  const Matrix* second[] = {&g2};
  adamw_step(ps, first, state, 0.01, h);
  adamw_step(ps, second, state, 0.008, h);

  double x = 0.3, m = 0, v = 0;
  const double grads[] = {0.7, -0.2}, lrs[] = {0.01, 0.008};
  for (int t = 1; t <= 2; ++t) {
    const double gr = grads[t - 1], lr = lrs[t - 1];
    x -= lr * h.weight_decay * x;
    m = h.beta1 * m + (1 - h.beta1) * gr;
    v = h.beta2 * v + (1 - h.beta2) * gr * gr;
    x -= lr * (m / (1 - std::pow(h.beta1, t))) / (std::sqrt(v / (1 - std::pow(h.beta2, t))) + h.eps);
  }
  EXPECT_NEAR(p(0, 0), x, 1e-15);
}

TEST(AdamW, NonFiniteGradientAborts) {
  Matrix a(1, 2), b(2, 2), ga(1, 2), gb(2, 2);
  gb(1, 0) = std::nan("");
  Matrix* ps[] = {&a, &b};
  const Matrix* gs[] = {&ga, &gb};
  OptimizerState state;
  try {
    adamw_step(ps, gs, state, 0.1, {});
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("tensor 1 entry 2"), std::string::npos) << e.what();
  }
}

TEST(Train, HistoryContractAndLossDecreases) {
  const TransactionGraph g = separable_toy();
  TrainConfig tc;
  tc.epochs = 30;
  const TrainResult r = train(g, toy_split(), toy_model("LR-W"), tc);
  ASSERT_EQ(r.history.size(), 30u);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
  for (std::size_t e = 0; e < 30; ++e) {
    EXPECT_EQ(r.history[e].epoch, e);
    EXPECT_EQ(r.history[e].lr, cosine_lr(e, 30, tc.lr0));
  }
  std::ostringstream csv;
  write_history(csv, r.history);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "epoch,lr,train_loss,val_auc,val_f1_macro");
}

TEST(Train, SameSeedSameHistory) {
  const TransactionGraph g = separable_toy();
  TrainConfig tc;
  tc.epochs = 8;
  tc.seed = 4;
  const ModelConfig m = toy_model("ATGAT-W");
  const TrainResult a = train(g, toy_split(), m, tc), b = train(g, toy_split(), m, tc);
  std::ostringstream ha, hb;
  write_history(ha, a.history);
  write_history(hb, b.history);
  EXPECT_EQ(ha.str(), hb.str());
  for (std::size_t e = 0; e < 8; ++e) EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
  EXPECT_EQ(a.selected_epoch, b.selected_epoch);
}

TEST(Train, GatVariantsHalveTheToyLoss) {
  const TransactionGraph g = separable_toy();
  TrainConfig tc;  // 170 epochs
  for (const char* name : {"B-GAT-W", "S-GAT-W", "T-GAT-W", "ATGAT-W", "ATGAT"}) {
    const TrainResult r = train(g, toy_split(), toy_model(name), tc);
    EXPECT_LE(r.history.back().train_loss, 0.5 * r.history.front().train_loss)
        << name << " " << r.history.front().train_loss << " -> " << r.history.back().train_loss;
  }
}

TEST(Train, SelectionModes) {
  const TransactionGraph g = separable_toy();
  TrainConfig tc;
  tc.epochs = 12;
  tc.selection = Selection::final_epoch;
  const ModelConfig m = toy_model("S-GAT-W");
  const TrainResult last = train(g, toy_split(), m, tc);
  EXPECT_EQ(last.selected_epoch, 11u);
  tc.selection = Selection::best_val_auc;
  const TrainResult best = train(g, toy_split(), m, tc);
  double top = -1;
  for (const auto& h : best.history) top = std::max(top, h.val_auc);
  EXPECT_EQ(best.history[best.selected_epoch].val_auc, top);
  for (std::size_t e = 0; e < best.selected_epoch; ++e) EXPECT_LT(best.history[e].val_auc, top);
}

TEST(Train, WeightedLossNeedsBothClasses) {
  const TransactionGraph g = separable_toy();
  SplitAssignment s;
  s.train = {1, 2, 3};
  s.val = {0, 5};
  TrainConfig tc;
  tc.epochs = 2;
  EXPECT_THROW(train(g, s, toy_model("LR-W"), tc), std::invalid_argument);
  EXPECT_NO_THROW(train(g, s, toy_model("LR"), tc));
  tc.epochs = 0;
  EXPECT_THROW(train(g, s, toy_model("LR"), tc), std::invalid_argument);
}
