// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace atgat {

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(s_pos > s_neg) + 0.5 P(s_pos == s_neg), computed exactly from tie
/// groups after sorting. Labels are 0/1; both classes must be present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct ThresholdMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // positive (illicit) class
  double recall = 0.0;     // positive (illicit) class
  double f1_macro = 0.0;   // mean of per-class F1
};

/// Predictions are score >= threshold. Cells with an empty denominator are 0.
ThresholdMetrics threshold_metrics(std::span<const double> scores, std::span<const int> labels,
                                   double threshold = 0.5);

struct MetricRecord {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1_macro = 0.0;
  double auc = 0.0;
};

/// Threshold metrics plus AUC. AUC is NaN when only one class is present.
MetricRecord evaluate_metrics(std::span<const double> scores, std::span<const int> labels,
                              double threshold = 0.5);

double sample_mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_std(std::span<const double> xs);

/// (mean_a - mean_b) / pooled sd. Each sample needs >= 2 values. Zero pooled
/// variance yields 0 for equal means and +-infinity otherwise.
double cohens_d(std::span<const double> a, std::span<const double> b);

}  // namespace atgat
