// SPDX-License-Identifier: Apache-2.0
#include "atgat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace atgat {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("metrics: " + std::to_string(scores.size()) + " scores for " +
                                std::to_string(labels.size()) + " labels");
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("metrics: labels must be 0 or 1");
}

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1(double tp, double fp, double fn) {
  const double p = safe_ratio(tp, tp + fp);
  const double r = safe_ratio(tp, tp + fn);
  return safe_ratio(2.0 * p * r, p + r);
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double negatives_below = 0.0;
  double wins = 0.0;
  double positives = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos = 0.0, neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1.0;
      ++j;
    }
    wins += pos * (negatives_below + 0.5 * neg);
    negatives_below += neg;
    positives += pos;
    i = j;
  }
  if (positives == 0.0 || negatives_below == 0.0)
    throw std::invalid_argument("roc_auc: both classes must be present");
  return wins / (positives * negatives_below);
}

ThresholdMetrics threshold_metrics(std::span<const double> scores, std::span<const int> labels,
                                   double threshold) {
  check_lengths(scores, labels);
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) (predicted ? tp : fn) += 1.0;
    else (predicted ? fp : tn) += 1.0;
  }
  ThresholdMetrics m;
  m.accuracy = safe_ratio(tp + tn, tp + tn + fp + fn);
  m.precision = safe_ratio(tp, tp + fp);
  m.recall = safe_ratio(tp, tp + fn);
  m.f1_macro = 0.5 * (f1(tp, fp, fn) + f1(tn, fn, fp));
  return m;
}

MetricRecord evaluate_metrics(std::span<const double> scores, std::span<const int> labels,
                              double threshold) {
  const ThresholdMetrics t = threshold_metrics(scores, labels, threshold);
  MetricRecord r{t.accuracy, t.precision, t.recall, t.f1_macro,
                 std::numeric_limits<double>::quiet_NaN()};
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (has_pos && has_neg) r.auc = roc_auc(scores, labels);
  return r;
}

double sample_mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("sample_mean: empty sample");
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("cohens_d: each sample needs at least 2 values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = sample_std(a), sb = sample_std(b);
  const double pooled = std::sqrt(((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / (na + nb - 2.0));
  const double diff = sample_mean(a) - sample_mean(b);
  if (pooled == 0.0) {
    if (diff == 0.0) return 0.0;
    return diff > 0.0 ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
  }
  return diff / pooled;
}

}  // namespace atgat
