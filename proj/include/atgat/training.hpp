// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "atgat/autodiff.hpp"
#include "atgat/graph_data.hpp"
#include "atgat/metrics.hpp"
#include "atgat/models.hpp"

namespace atgat {

enum class Selection { best_val_auc, final_epoch };

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  std::size_t epochs = 170;
  double lr0 = 0.005;
  AdamWHyper optimizer;
  std::uint64_t seed = 0;
  Selection selection = Selection::best_val_auc;
  double threshold = 0.5;

  void validate() const;
};

struct OptimizerState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
};

/// Ratio N_neg / N_pos over 0/1 labels. Throws when either class is absent.
double class_weight(std::span<const int> labels);

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before the log.
inline constexpr double kProbClamp = 1e-7;

/// Mean over rows of -[w_pos y log p + (1 - y) log(1 - p)]; `probs` is n x 1.
ad::Var weighted_bce(ad::Var probs, std::span<const int> labels, double w_pos);

double weighted_bce_value(std::span<const double> probs, std::span<const int> labels, double w_pos);
double bce_value(std::span<const double> probs, std::span<const int> labels);

/// lr0 (1 + cos(pi epoch / total)) / 2 for 0 <= epoch <= total.
double cosine_lr(std::size_t epoch, std::size_t total, double lr0);

/// Decoupled decay p *= (1 - lr wd) followed by the bias-corrected Adam step.
/// Moment buffers are created on first use. Throws std::runtime_error on a
/// non-finite gradient, naming the tensor and entry.
void adamw_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                OptimizerState& state, double lr, const AdamWHyper& hyper);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  double val_f1_macro = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t selected_epoch = 0;
};

/// 0/1 labels of `nodes`; throws if any node is unlabeled.
std::vector<int> binary_labels(const TransactionGraph& graph, std::span<const std::size_t> nodes);

/// Full-batch training. Loss covers split.train only; validation metrics are
/// computed after every update. Throws std::runtime_error naming the epoch when
/// the loss or a gradient turns non-finite.
TrainResult train(const TransactionGraph& graph, const SplitAssignment& split,
                  const ModelConfig& model, const TrainConfig& config);

/// Same, reusing precomputed inputs for `graph`.
TrainResult train(const GraphInputs& inputs, const TransactionGraph& graph,
                  const SplitAssignment& split, const ModelConfig& model, const TrainConfig& config);

/// Header "epoch,lr,train_loss,val_auc,val_f1_macro", one row per epoch.
void write_history(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace atgat
