// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "atgat/graph_data.hpp"
#include "atgat/metrics.hpp"
#include "atgat/models.hpp"
#include "atgat/training.hpp"

namespace atgat {

/// Column order of every metric table.
inline constexpr std::array<const char*, 5> kMetricNames = {"Accuracy", "Precision", "Recall",
                                                            "F1-Macro", "AUC"};

std::array<double, 5> metric_values(const MetricRecord& m);

/// One training run evaluated on the validation split.
struct RunRecord {
  ModelSpec spec;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string error;
  MetricRecord metrics;
  std::size_t selected_epoch = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
};

struct RunReport {
  ModelSpec spec;
  std::vector<RunRecord> runs;                // seed order, including diverged runs
  std::array<MetricSummary, 5> summary{};     // over non-diverged runs, kMetricNames order
  std::size_t excluded = 0;

  std::vector<double> aucs() const;           // non-diverged runs only
};

RunReport summarize_runs(const ModelSpec& spec, std::vector<RunRecord> runs);

struct AblationConfig {
  std::vector<ModelSpec> variants;
  std::size_t seeds = 10;
  std::uint64_t base_seed = 0;
  /// Fixed split drawn with `split_seed` unless each run redraws with its own seed.
  bool split_per_seed = false;
  std::uint64_t split_seed = 0;
  SplitRatios ratios;
  bool stratified = false;
  ModelConfig model;  // spec is replaced per variant
  TrainConfig train;  // seed is replaced per run
  std::size_t threads = 1;
};

struct AblationReport {
  std::vector<RunReport> rows;
  /// d[i][j] = cohens_d(auc_i, auc_j); NaN when a row has fewer than 2 usable runs.
  std::vector<std::vector<double>> cohens_d;
};

/// Train and evaluate one run. Divergence is captured in the record.
RunRecord run_single(const TransactionGraph& graph, const GraphInputs& inputs,
                     const SplitAssignment& split, const ModelConfig& model,
                     const TrainConfig& train_config);

/// Every variant x seed (seeds base_seed + i), optionally on worker threads.
/// Results are aggregated in (variant, seed) order regardless of scheduling.
AblationReport ablation_run(const TransactionGraph& graph, const AblationConfig& config);

std::vector<std::vector<double>> cohens_d_matrix(const std::vector<std::vector<double>>& samples);

/// Header row then one row per record, full-precision values.
void write_metrics(std::ostream& out, const MetricRecord& metrics);
/// Mean±std table (4 decimals) with run counts, blank line, Cohen's d block (3 decimals).
void write_report(std::ostream& out, const AblationReport& report);
/// One row per (variant, seed) run.
void write_runs(std::ostream& out, const AblationReport& report);

}  // namespace atgat
