// SPDX-License-Identifier: Apache-2.0
#include "atgat/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "atgat/ablation.hpp"
#include "atgat/config.hpp"
#include "atgat/format.hpp"
#include "atgat/grad_suite.hpp"
#include "atgat/synth.hpp"

namespace atgat::cli {

namespace {

struct Options {
  std::string config_file;
  std::vector<std::string> assignments;
  std::string out_dir;
};

AppConfig build_config(const Options& opts) {
  AppConfig config;
  if (!opts.config_file.empty()) apply_config_file(config, opts.config_file);
  for (const std::string& a : opts.assignments) apply_assignment(config, a);
  if (!opts.out_dir.empty()) config.set("out", opts.out_dir);
  config.validate();
  return config;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void echo_config(const AppConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  auto out = open_output(config.out_dir / "config.txt");
  write_config(out, config);
}

const Index& pick_split(const SplitAssignment& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "held") return split.held;
  return split.val;
}

MetricRecord evaluate_on(const Dataset& data, const GraphInputs& inputs, const ModelParams& params,
                         const ModelConfig& model, const Index& nodes, double threshold) {
  const std::vector<double> scores = predict(inputs, params, model);
  std::vector<double> picked;
  picked.reserve(nodes.size());
  for (std::size_t v : nodes) picked.push_back(scores[v]);
  return evaluate_metrics(picked, binary_labels(data.graph, nodes), threshold);
}

void print_metrics(std::ostream& out, const MetricRecord& m) {
  const auto values = metric_values(m);
  for (std::size_t k = 0; k < values.size(); ++k)
    out << (k ? "  " : "") << kMetricNames[k] << ' ' << format_fixed(values[k], 4);
  out << '\n';
}

int cmd_train(const AppConfig& config, std::ostream& out) {
  echo_config(config);
  const Dataset data = prepare_dataset(config);
  ModelConfig model = config.model;
  model.input_dim = data.graph.feature_dim();
  const GraphInputs inputs = prepare_inputs(data.graph, model);
  const TrainResult result = train(inputs, data.graph, data.split, model, config.train);

  save_checkpoint(config.out_dir / "checkpoint.bin", Checkpoint{model, config.train.seed, result.params});
  {
    auto h = open_output(config.out_dir / "history.csv");
    write_history(h, result.history);
  }
  const MetricRecord m = evaluate_on(data, inputs, result.params, model, data.split.val, config.train.threshold);
  {
    auto f = open_output(config.out_dir / "metrics.csv");
    write_metrics(f, m);
  }
  out << model.spec.name() << ": " << data.graph.num_nodes() << " nodes, " << data.graph.num_edges()
      << " edges, selected epoch " << result.selected_epoch << '\n';
  print_metrics(out, m);
  return 0;
}

int cmd_eval(const AppConfig& config, std::ostream& out) {
  echo_config(config);
  const auto path = config.checkpoint_path.empty() ? config.out_dir / "checkpoint.bin" : config.checkpoint_path;
  if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  const Checkpoint ck = load_checkpoint(path);
  const Dataset data = prepare_dataset(config);
  if (ck.config.input_dim != data.graph.feature_dim())
    throw std::runtime_error("checkpoint expects " + std::to_string(ck.config.input_dim) + " features, data has " +
                             std::to_string(data.graph.feature_dim()));
  const GraphInputs inputs = prepare_inputs(data.graph, ck.config);
  const MetricRecord m =
      evaluate_on(data, inputs, ck.params, ck.config, pick_split(data.split, config.eval_split), config.train.threshold);
  {
    auto f = open_output(config.out_dir / "metrics.csv");
    write_metrics(f, m);
  }
  out << ck.config.spec.name() << " on " << config.eval_split << " split\n";
  print_metrics(out, m);
  return 0;
}

int cmd_ablate(const AppConfig& config, std::ostream& out) {
  echo_config(config);
  const Dataset data = prepare_dataset(config);
  AblationConfig ac;
  ac.variants = config.ablate_variants;
  ac.seeds = config.ablate_seeds;
  ac.base_seed = config.ablate_base_seed;
  ac.split_per_seed = config.ablate_split_per_seed;
  ac.split_seed = config.split_seed;
  ac.ratios = config.split;
  ac.stratified = config.stratified;
  ac.model = config.model;
  ac.model.input_dim = data.graph.feature_dim();
  ac.train = config.train;
  ac.threads = config.ablate_threads;
  const AblationReport report = ablation_run(data.graph, ac);
  {
    auto f = open_output(config.out_dir / "report.csv");
    write_report(f, report);
  }
  {
    auto f = open_output(config.out_dir / "runs.csv");
    write_runs(f, report);
  }
  write_report(out, report);
  return 0;
}

int cmd_synth(const AppConfig& config, std::ostream& out) {
  if (config.source != DataSource::synth) throw ConfigError("synth requires data.source = synth");
  echo_config(config);
  const SynthGraph s = generate_synthetic(config.synth);
  save_graph(s.graph, config.out_dir / "features.csv", config.out_dir / "classes.csv", config.out_dir / "edges.csv",
             config.load);
  out << "wrote " << s.graph.num_nodes() << " nodes (" << s.fraud_nodes.size() << " illicit), "
      << s.graph.num_edges() << " edges to " << config.out_dir.string() << '\n';
  return 0;
}

int cmd_gradcheck(const AppConfig& config, std::ostream& out) {
  double worst = 0.0;
  bool ok = true;
  for (const GradCaseResult& r : run_grad_check_suite(config.gradcheck_eps)) {
    const bool passed = r.result.passed(config.gradcheck_tolerance);
    ok = ok && passed;
    if (r.result.finite) worst = std::max(worst, r.result.max_rel_error);
    out << (passed ? "ok   " : "FAIL ") << r.name << ' ' << r.result.max_rel_error;
    if (!r.result.message.empty()) out << "  " << r.result.message;
    out << '\n';
  }
  out << "max relative error " << worst << (ok ? " (pass)" : " (fail)") << " tolerance "
      << config.gradcheck_tolerance << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal graph attention networks for transaction fraud detection", "atgat"};
  app.require_subcommand(1);
  Options opts;
  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const AppConfig&, std::ostream&);
  };
  const Command commands[] = {
      {"train", "Train one model; writes checkpoint, history and validation metrics", cmd_train},
      {"eval", "Evaluate a checkpoint; writes metrics", cmd_eval},
      {"ablate", "Repeated-seed runs of several variants; writes report and per-run rows", cmd_ablate},
      {"synth", "Generate a synthetic dataset in the three-file format", cmd_synth},
      {"gradcheck", "Check every gradient rule against central differences", cmd_gradcheck},
  };
  std::vector<CLI::App*> subs;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("-c,--config", opts.config_file, "Config file of key = value lines")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", opts.assignments, "Override one key (KEY=VALUE); repeatable");
    sub->add_option("-o,--out", opts.out_dir, "Output directory");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  AppConfig config;
  try {
    config = build_config(opts);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      return commands[i].fn(config, out);
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}

}  // namespace atgat::cli
