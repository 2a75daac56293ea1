// SPDX-License-Identifier: Apache-2.0
#include "atgat/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "atgat/format.hpp"

namespace atgat {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw std::invalid_argument("train: lr0 must be > 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw std::invalid_argument("train: betas must lie in [0, 1)");
  if (!(optimizer.eps > 0.0)) throw std::invalid_argument("train: eps must be > 0");
  if (!(optimizer.weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be >= 0");
}

double class_weight(std::span<const int> labels) {
  double pos = 0.0, neg = 0.0;
  for (int y : labels) {
    if (y == 1) pos += 1.0;
    else if (y == 0) neg += 1.0;
    else throw std::invalid_argument("class_weight: labels must be 0 or 1");
  }
  if (pos == 0.0)
    throw std::invalid_argument(
        "class_weight: no positive training labels; use the plain (unweighted) loss instead");
  if (neg == 0.0) throw std::invalid_argument("class_weight: no negative training labels");
  return neg / pos;
}

namespace {

void check_loss_inputs(std::size_t n, std::span<const int> labels, double w_pos) {
  if (n != labels.size())
    throw std::invalid_argument("weighted_bce: " + std::to_string(n) + " probabilities for " +
                                std::to_string(labels.size()) + " labels");
  if (n == 0) throw std::invalid_argument("weighted_bce: empty input");
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("weighted_bce: labels must be 0 or 1");
  if (!(w_pos > 0.0) || !std::isfinite(w_pos)) throw std::invalid_argument("weighted_bce: w_pos must be > 0");
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

}  // namespace

ad::Var weighted_bce(ad::Var probs, std::span<const int> labels, double w_pos) {
  if (probs.cols() != 1) throw std::invalid_argument("weighted_bce: probabilities must be n x 1");
  check_loss_inputs(probs.rows(), labels, w_pos);
  const std::size_t n = labels.size();
  Matrix pos_coef(n, 1), neg_coef(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    pos_coef.data[i] = w_pos * labels[i];
    neg_coef.data[i] = 1.0 - labels[i];
  }
  ad::ValueGraph& g = probs.graph();
  const ad::Var p = ad::clamp(probs, kProbClamp, 1.0 - kProbClamp);
  const ad::Var terms = ad::add(ad::mul(g.constant(std::move(pos_coef)), ad::log(p)),
                                ad::mul(g.constant(std::move(neg_coef)), ad::log(ad::affine(p, -1.0, 1.0))));
  return ad::scale(ad::mean(terms), -1.0);
}

double weighted_bce_value(std::span<const double> probs, std::span<const int> labels, double w_pos) {
  check_loss_inputs(probs.size(), labels, w_pos);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    total += (w_pos * labels[i]) * std::log(p) + (1.0 - labels[i]) * std::log(-1.0 * p + 1.0);
  }
  return -1.0 * (total / static_cast<double>(probs.size()));
}

double bce_value(std::span<const double> probs, std::span<const int> labels) {
  check_loss_inputs(probs.size(), labels, 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    const double y = labels[i];
    total += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -(total / static_cast<double>(probs.size()));
}

double cosine_lr(std::size_t epoch, std::size_t total, double lr0) {
  if (total == 0) throw std::invalid_argument("cosine_lr: total_epochs must be >= 1");
  if (epoch > total)
    throw std::out_of_range("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(total) + "]");
  if (epoch == 0) return lr0;
  if (epoch == total) return 0.0;
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total);
  return std::max(0.0, lr0 * (1.0 + std::cos(phase)) / 2.0);
}

void adamw_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                OptimizerState& state, double lr, const AdamWHyper& hyper) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adamw_step: " + std::to_string(params.size()) + " parameters, " +
                                std::to_string(grads.size()) + " gradients");
  if (state.m.empty() && state.v.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows, p->cols);
      state.v.emplace_back(p->rows, p->cols);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adamw_step: optimizer state does not match parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_shape(*grads[k]) || !params[k]->same_shape(state.m[k]) ||
        !params[k]->same_shape(state.v[k]))
      throw std::invalid_argument("adamw_step: shape mismatch for tensor " + std::to_string(k));
    for (std::size_t i = 0; i < grads[k]->data.size(); ++i)
      if (!std::isfinite(grads[k]->data[i]))
        throw std::runtime_error("adamw_step: non-finite gradient in tensor " + std::to_string(k) +
                                 " entry " + std::to_string(i));
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  const double decay = 1.0 - lr * hyper.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k]->data;
    const auto& g = grads[k]->data;
    auto& m = state.m[k].data;
    auto& v = state.v[k].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] = p[i] * decay - lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

std::vector<int> binary_labels(const TransactionGraph& graph, std::span<const std::size_t> nodes) {
  std::vector<int> out;
  out.reserve(nodes.size());
  for (std::size_t v : nodes) {
    const Label l = graph.labels().at(v);
    if (l == Label::unknown)
      throw std::invalid_argument("node " + std::to_string(v) + " has no label");
    out.push_back(l == Label::illicit ? 1 : 0);
  }
  return out;
}

TrainResult train(const TransactionGraph& graph, const SplitAssignment& split,
                  const ModelConfig& model, const TrainConfig& config) {
  return train(prepare_inputs(graph, model), graph, split, model, config);
}

TrainResult train(const GraphInputs& inputs, const TransactionGraph& graph,
                  const SplitAssignment& split, const ModelConfig& model, const TrainConfig& config) {
  config.validate();
  model.validate();
  if (split.train.empty()) throw std::invalid_argument("train: empty training split");
  const std::vector<int> y_train = binary_labels(graph, split.train);
  const std::vector<int> y_val = binary_labels(graph, split.val);
  const double w_pos = model.spec.loss == LossMode::weighted ? class_weight(y_train) : 1.0;

  TrainResult result;
  result.params = init_params(model, config.seed);
  std::vector<Matrix*> param_ptrs;
  result.params.visit([&](const std::string&, Matrix& m) { param_ptrs.push_back(&m); });

  Rng dropout_rng(config.seed, "dropout");
  OptimizerState state;
  ModelParams best;
  double best_auc = -1.0;
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cosine_lr(epoch, config.epochs, config.lr0);
    {
      ad::ValueGraph g;
      const ModelWeights<ad::Var> weights = bind_params(g, result.params);
      const ad::Var probs = forward(g, weights, inputs, model, ad::Mode::train, dropout_rng);
      const ad::Var loss = weighted_bce(ad::gather_rows(probs, split.train), y_train, w_pos);
      rec.train_loss = loss.value().data[0];
      if (!std::isfinite(rec.train_loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      g.backward(loss);
      std::vector<const Matrix*> grads;
      weights.visit([&](const std::string&, const ad::Var& v) { grads.push_back(&v.grad()); });
      try {
        adamw_step(param_ptrs, grads, state, rec.lr, config.optimizer);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train: epoch " + std::to_string(epoch) + ": " + e.what());
      }
    }

    const std::vector<double> scores = predict(inputs, result.params, model);
    std::vector<double> val_scores;
    val_scores.reserve(split.val.size());
    for (std::size_t v : split.val) val_scores.push_back(scores[v]);
    if (!val_scores.empty()) {
      const MetricRecord m = evaluate_metrics(val_scores, y_val, config.threshold);
      rec.val_auc = m.auc;
      rec.val_f1_macro = m.f1_macro;
    } else {
      rec.val_auc = std::numeric_limits<double>::quiet_NaN();
      rec.val_f1_macro = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.push_back(rec);

    if (config.selection == Selection::best_val_auc && rec.val_auc > best_auc) {
      best_auc = rec.val_auc;
      best = result.params;
      have_best = true;
      result.selected_epoch = epoch;
    }
  }
  if (have_best) {
    result.params = std::move(best);
  } else {
    result.selected_epoch = config.epochs - 1;
  }
  return result;
}

void write_history(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,lr,train_loss,val_auc,val_f1_macro\n";
  for (const EpochRecord& r : history)
    out << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.train_loss) << ','
        << format_double(r.val_auc) << ',' << format_double(r.val_f1_macro) << '\n';
}

}  // namespace atgat
