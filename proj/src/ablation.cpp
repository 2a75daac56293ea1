// SPDX-License-Identifier: Apache-2.0
#include "atgat/ablation.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "atgat/format.hpp"

namespace atgat {

std::array<double, 5> metric_values(const MetricRecord& m) {
  return {m.accuracy, m.precision, m.recall, m.f1_macro, m.auc};
}

std::vector<double> RunReport::aucs() const {
  std::vector<double> out;
  for (const RunRecord& r : runs)
    if (!r.diverged) out.push_back(r.metrics.auc);
  return out;
}

RunReport summarize_runs(const ModelSpec& spec, std::vector<RunRecord> runs) {
  RunReport report;
  report.spec = spec;
  report.runs = std::move(runs);
  std::array<std::vector<double>, 5> columns;
  for (const RunRecord& r : report.runs) {
    if (r.diverged) {
      ++report.excluded;
      continue;
    }
    const auto values = metric_values(r.metrics);
    for (std::size_t k = 0; k < 5; ++k) columns[k].push_back(values[k]);
  }
  for (std::size_t k = 0; k < 5; ++k) {
    if (columns[k].empty()) {
      report.summary[k] = {std::numeric_limits<double>::quiet_NaN(),
                           std::numeric_limits<double>::quiet_NaN()};
    } else {
      report.summary[k] = {sample_mean(columns[k]), sample_std(columns[k])};
    }
  }
  return report;
}

RunRecord run_single(const TransactionGraph& graph, const GraphInputs& inputs,
                     const SplitAssignment& split, const ModelConfig& model,
                     const TrainConfig& train_config) {
  RunRecord rec;
  rec.spec = model.spec;
  rec.seed = train_config.seed;
  try {
    const TrainResult trained = train(inputs, graph, split, model, train_config);
    rec.selected_epoch = trained.selected_epoch;
    const std::vector<double> scores = predict(inputs, trained.params, model);
    std::vector<double> val_scores;
    for (std::size_t v : split.val) val_scores.push_back(scores[v]);
    rec.metrics = evaluate_metrics(val_scores, binary_labels(graph, split.val), train_config.threshold);
  } catch (const std::runtime_error& e) {
    rec.diverged = true;
    rec.error = e.what();
  }
  return rec;
}

std::vector<std::vector<double>> cohens_d_matrix(const std::vector<std::vector<double>>& samples) {
  const std::size_t n = samples.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (samples[i].size() < 2 || samples[j].size() < 2) {
        d[i][j] = std::numeric_limits<double>::quiet_NaN();
      } else if (i != j) {
        d[i][j] = cohens_d(samples[i], samples[j]);
      }
    }
  }
  return d;
}

AblationReport ablation_run(const TransactionGraph& graph, const AblationConfig& config) {
  if (config.variants.empty()) throw std::invalid_argument("ablation: no variants");
  if (config.seeds < 2) throw std::invalid_argument("ablation: at least 2 seeds are needed");
  config.train.validate();

  struct Job {
    std::size_t variant;
    std::size_t seed_index;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < config.variants.size(); ++v)
    for (std::size_t s = 0; s < config.seeds; ++s) jobs.push_back({v, s});

  std::vector<ModelConfig> models(config.variants.size(), config.model);
  std::vector<GraphInputs> inputs;
  for (std::size_t v = 0; v < models.size(); ++v) {
    models[v].spec = config.variants[v];
    models[v].validate();
    inputs.push_back(prepare_inputs(graph, models[v]));
  }
  const SplitAssignment fixed_split = split_nodes(graph, config.ratios, config.split_seed, config.stratified);

  std::vector<RunRecord> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const Job& job = jobs[k];
      try {
        TrainConfig tc = config.train;
        tc.seed = config.base_seed + job.seed_index;
        const SplitAssignment split =
            config.split_per_seed ? split_nodes(graph, config.ratios, tc.seed, config.stratified) : fixed_split;
        results[k] = run_single(graph, inputs[job.variant], split, models[job.variant], tc);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(config.threads, jobs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  AblationReport report;
  std::vector<std::vector<double>> samples;
  for (std::size_t v = 0; v < config.variants.size(); ++v) {
    std::vector<RunRecord> runs(results.begin() + static_cast<std::ptrdiff_t>(v * config.seeds),
                                results.begin() + static_cast<std::ptrdiff_t>((v + 1) * config.seeds));
    report.rows.push_back(summarize_runs(config.variants[v], std::move(runs)));
    samples.push_back(report.rows.back().aucs());
  }
  report.cohens_d = cohens_d_matrix(samples);
  return report;
}

void write_metrics(std::ostream& out, const MetricRecord& metrics) {
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) out << (k ? "," : "") << kMetricNames[k];
  out << '\n';
  const auto values = metric_values(metrics);
  for (std::size_t k = 0; k < values.size(); ++k) out << (k ? "," : "") << format_double(values[k]);
  out << '\n';
}

void write_report(std::ostream& out, const AblationReport& report) {
  out << "Model Variant";
  for (const char* name : kMetricNames) out << ',' << name;
  out << ",Runs,Excluded\n";
  for (const RunReport& row : report.rows) {
    out << row.spec.name();
    for (const MetricSummary& s : row.summary)
      out << ',' << format_fixed(s.mean, 4) << "±" << format_fixed(s.std, 4);
    out << ',' << row.runs.size() - row.excluded << ',' << row.excluded << '\n';
  }
  out << '\n' << "Cohen's d (AUC)";
  for (const RunReport& row : report.rows) out << ',' << row.spec.name();
  out << '\n';
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    out << report.rows[i].spec.name();
    for (double d : report.cohens_d[i]) out << ',' << format_fixed(d, 3);
    out << '\n';
  }
}

void write_runs(std::ostream& out, const AblationReport& report) {
  out << "variant,seed";
  for (const char* name : kMetricNames) out << ',' << name;
  out << ",selected_epoch,diverged,error\n";
  for (const RunReport& row : report.rows) {
    for (const RunRecord& r : row.runs) {
      out << r.spec.name() << ',' << r.seed;
      for (double v : metric_values(r.metrics)) out << ',' << format_double(v);
      std::string error = r.error;
      for (char& c : error)
        if (c == ',' || c == '\n') c = ';';
      out << ',' << r.selected_epoch << ',' << (r.diverged ? 1 : 0) << ',' << error << '\n';
    }
  }
}

}  // namespace atgat
