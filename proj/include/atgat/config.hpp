// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "atgat/graph_data.hpp"
#include "atgat/models.hpp"
#include "atgat/synth.hpp"
#include "atgat/training.hpp"

namespace atgat {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DataSource { synth, files };

/// Every setting of a run. Keys are flat ("model.variant", "train.epochs", ...);
/// see `config_keys()` for the full list with defaults.
struct AppConfig {
  DataSource source = DataSource::synth;
  std::filesystem::path features_path;
  std::filesystem::path classes_path;
  std::filesystem::path edges_path;
  LoadOptions load;
  bool keep_unlabeled = false;
  bool standardize = false;

  SynthConfig synth;
  ModelConfig model;  // input_dim is taken from the data
  TrainConfig train;

  SplitRatios split;
  std::uint64_t split_seed = 0;
  bool stratified = false;

  std::vector<ModelSpec> ablate_variants;
  std::size_t ablate_seeds = 10;
  std::uint64_t ablate_base_seed = 0;
  bool ablate_split_per_seed = false;
  std::size_t ablate_threads = 1;

  double gradcheck_tolerance = 1e-4;
  double gradcheck_eps = 1e-6;

  std::string eval_split = "val";
  std::filesystem::path checkpoint_path;  // empty: <out>/checkpoint.bin
  std::filesystem::path out_dir = "out";

  /// Keys assigned explicitly (file or command line).
  std::set<std::string> explicit_keys;

  AppConfig();

  /// Throws ConfigError naming the key for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  /// Cross-field checks, including exactly one data source.
  void validate() const;
};

/// All keys in echo order.
const std::vector<std::string>& config_keys();

/// "key = value" lines; '#' starts a comment; blank lines are ignored.
void apply_config_text(AppConfig& config, std::string_view text, const std::string& origin);
void apply_config_file(AppConfig& config, const std::filesystem::path& path);
/// "key=value".
void apply_assignment(AppConfig& config, std::string_view assignment);

/// Echo of every key with its effective value.
void write_config(std::ostream& out, const AppConfig& config);

struct Dataset {
  TransactionGraph graph;
  SplitAssignment split;
};

/// Loads or generates the graph, restricts it to labeled nodes unless
/// keep_unlabeled, splits, and standardizes features on training rows.
Dataset prepare_dataset(const AppConfig& config);

}  // namespace atgat
