// SPDX-License-Identifier: Apache-2.0
#include "atgat/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "atgat/format.hpp"

namespace atgat {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': expected " + std::string(expected) + ", got '" +
                    std::string(value) + "'");
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss{std::string(v)};
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::string key;
  std::function<void(AppConfig&, std::string_view)> set;
  std::function<std::string(const AppConfig&)> get;
};

template <class Get>
Entry size_entry(std::string key, Get field) {
  return {key,
          [key, field](AppConfig& c, std::string_view v) { field(c) = static_cast<std::size_t>(to_u64(key, v)); },
          [field](const AppConfig& c) { return std::to_string(field(c)); }};
}

template <class Get>
Entry u64_entry(std::string key, Get field) {
  return {key, [key, field](AppConfig& c, std::string_view v) { field(c) = to_u64(key, v); },
          [field](const AppConfig& c) { return std::to_string(field(c)); }};
}

template <class Get>
Entry double_entry(std::string key, Get field) {
  return {key, [key, field](AppConfig& c, std::string_view v) { field(c) = to_double(key, v); },
          [field](const AppConfig& c) { return format_double(field(c)); }};
}

template <class Get>
Entry bool_entry(std::string key, Get field) {
  return {key, [key, field](AppConfig& c, std::string_view v) { field(c) = to_bool(key, v); },
          [field](const AppConfig& c) { return from_bool(field(c)); }};
}

template <class Get>
Entry path_entry(std::string key, Get field) {
  return {key, [field](AppConfig& c, std::string_view v) { field(c) = std::filesystem::path(std::string(v)); },
          [field](const AppConfig& c) { return field(c).string(); }};
}

template <class Get>
Entry string_entry(std::string key, Get field) {
  return {key, [field](AppConfig& c, std::string_view v) { field(c) = std::string(v); },
          [field](const AppConfig& c) { return field(c); }};
}

#define FIELD(expr) [](auto& c) -> auto& { return expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back({"data.source",
                 [](AppConfig& c, std::string_view v) {
                   if (v == "synth") c.source = DataSource::synth;
                   else if (v == "files") c.source = DataSource::files;
                   else bad_value("data.source", v, "synth or files");
                 },
                 [](const AppConfig& c) { return std::string(c.source == DataSource::synth ? "synth" : "files"); }});
    t.push_back(path_entry("data.features", FIELD(c.features_path)));
    t.push_back(path_entry("data.classes", FIELD(c.classes_path)));
    t.push_back(path_entry("data.edges", FIELD(c.edges_path)));
    t.push_back({"data.delimiter",
                 [](AppConfig& c, std::string_view v) {
                   if (v == "tab" || v == "\\t") c.load.delimiter = '\t';
                   else if (v.size() == 1) c.load.delimiter = v[0];
                   else bad_value("data.delimiter", v, "a single character or 'tab'");
                 },
                 [](const AppConfig& c) {
                   return c.load.delimiter == '\t' ? std::string("tab") : std::string(1, c.load.delimiter);
                 }});
    t.push_back(string_entry("data.illicit_token", FIELD(c.load.illicit_token)));
    t.push_back(string_entry("data.licit_token", FIELD(c.load.licit_token)));
    t.push_back({"data.feature_columns",
                 [](AppConfig& c, std::string_view v) {
                   c.load.feature_columns.clear();
                   for (const std::string& item : split_list(v))
                     c.load.feature_columns.push_back(static_cast<std::size_t>(to_u64("data.feature_columns", item)));
                 },
                 [](const AppConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.load.feature_columns.size(); ++i)
                     out += (i ? "," : "") + std::to_string(c.load.feature_columns[i]);
                   return out;
                 }});
    t.push_back(bool_entry("data.keep_unlabeled", FIELD(c.keep_unlabeled)));
    t.push_back(bool_entry("data.standardize", FIELD(c.standardize)));

    t.push_back(size_entry("synth.n_nodes", FIELD(c.synth.n_nodes)));
    t.push_back(size_entry("synth.n_time_steps", FIELD(c.synth.n_time_steps)));
    t.push_back(double_entry("synth.fraud_ratio", FIELD(c.synth.fraud_ratio)));
    t.push_back(size_entry("synth.feature_dim", FIELD(c.synth.feature_dim)));
    t.push_back(size_entry("synth.attach_degree", FIELD(c.synth.attach_degree)));
    t.push_back(size_entry("synth.fraud_burst_delta", FIELD(c.synth.fraud_burst_delta)));
    t.push_back(double_entry("synth.feature_shift", FIELD(c.synth.feature_shift)));
    t.push_back(u64_entry("synth.seed", FIELD(c.synth.seed)));

    t.push_back({"model.variant",
                 [](AppConfig& c, std::string_view v) {
                   try {
                     c.model.spec = ModelSpec::parse(v);
                   } catch (const std::invalid_argument&) {
                     bad_value("model.variant", v, "one of B-GAT, S-GAT, T-GAT, ATGAT, GCN, LR (optionally -W)");
                   }
                 },
                 [](const AppConfig& c) { return c.model.spec.name(); }});
    t.push_back(size_entry("model.hidden_dim", FIELD(c.model.hidden_dim)));
    t.push_back(size_entry("model.layers", FIELD(c.model.layers)));
    t.push_back(size_entry("model.heads", FIELD(c.model.heads)));
    t.push_back(size_entry("model.head_dim", FIELD(c.model.head_dim)));
    t.push_back(size_entry("model.fusion_hidden", FIELD(c.model.fusion_hidden)));
    t.push_back(double_entry("model.leaky_slope", FIELD(c.model.leaky_slope)));
    t.push_back(double_entry("model.attention_dropout", FIELD(c.model.attention_dropout)));
    t.push_back(size_entry("model.d_t", FIELD(c.model.temporal.d_t)));
    t.push_back(size_entry("model.d_pos", FIELD(c.model.temporal.d_pos)));
    t.push_back(double_entry("model.temporal_dropout", FIELD(c.model.temporal.dropout)));
    t.push_back(bool_entry("model.share_temporal_embedding", FIELD(c.model.share_temporal_embedding)));

    t.push_back(size_entry("train.epochs", FIELD(c.train.epochs)));
    t.push_back(double_entry("train.lr0", FIELD(c.train.lr0)));
    t.push_back(double_entry("train.beta1", FIELD(c.train.optimizer.beta1)));
    t.push_back(double_entry("train.beta2", FIELD(c.train.optimizer.beta2)));
    t.push_back(double_entry("train.eps", FIELD(c.train.optimizer.eps)));
    t.push_back(double_entry("train.weight_decay", FIELD(c.train.optimizer.weight_decay)));
    t.push_back(u64_entry("train.seed", FIELD(c.train.seed)));
    t.push_back({"train.selection",
                 [](AppConfig& c, std::string_view v) {
                   if (v == "best_val_auc") c.train.selection = Selection::best_val_auc;
                   else if (v == "final") c.train.selection = Selection::final_epoch;
                   else bad_value("train.selection", v, "best_val_auc or final");
                 },
                 [](const AppConfig& c) {
                   return std::string(c.train.selection == Selection::best_val_auc ? "best_val_auc" : "final");
                 }});
    t.push_back(double_entry("eval.threshold", FIELD(c.train.threshold)));
    t.push_back(string_entry("eval.split", FIELD(c.eval_split)));
    t.push_back(path_entry("eval.checkpoint", FIELD(c.checkpoint_path)));

    t.push_back(double_entry("split.train", FIELD(c.split.train)));
    t.push_back(double_entry("split.val", FIELD(c.split.val)));
    t.push_back(double_entry("split.held", FIELD(c.split.held)));
    t.push_back(u64_entry("split.seed", FIELD(c.split_seed)));
    t.push_back(bool_entry("split.stratified", FIELD(c.stratified)));

    t.push_back({"ablate.variants",
                 [](AppConfig& c, std::string_view v) {
                   c.ablate_variants.clear();
                   for (const std::string& item : split_list(v)) {
                     try {
                       c.ablate_variants.push_back(ModelSpec::parse(item));
                     } catch (const std::invalid_argument&) {
                       bad_value("ablate.variants", item, "a model variant name");
                     }
                   }
                   if (c.ablate_variants.empty()) bad_value("ablate.variants", v, "at least one variant");
                 },
                 [](const AppConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.ablate_variants.size(); ++i)
                     out += (i ? "," : "") + c.ablate_variants[i].name();
                   return out;
                 }});
    t.push_back(size_entry("ablate.seeds", FIELD(c.ablate_seeds)));
    t.push_back(u64_entry("ablate.base_seed", FIELD(c.ablate_base_seed)));
    t.push_back(bool_entry("ablate.split_per_seed", FIELD(c.ablate_split_per_seed)));
    t.push_back(size_entry("ablate.threads", FIELD(c.ablate_threads)));

    t.push_back(double_entry("gradcheck.tolerance", FIELD(c.gradcheck_tolerance)));
    t.push_back(double_entry("gradcheck.eps", FIELD(c.gradcheck_eps)));
    t.push_back(path_entry("out", FIELD(c.out_dir)));
    return t;
  }();
  return table;
}

#undef FIELD

const Entry& find_entry(std::string_view key) {
  for (const Entry& e : entries())
    if (e.key == key) return e;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

AppConfig::AppConfig() {
  for (const char* name : {"B-GAT", "S-GAT", "T-GAT", "ATGAT", "ATGAT-W"})
    ablate_variants.push_back(ModelSpec::parse(name));
}

void AppConfig::set(std::string_view key, std::string_view value) {
  find_entry(key).set(*this, trim(value));
  explicit_keys.insert(std::string(key));
}

std::string AppConfig::get(std::string_view key) const { return find_entry(key).get(*this); }

void AppConfig::validate() const {
  const bool any_path = !features_path.empty() || !classes_path.empty() || !edges_path.empty();
  const bool any_synth = std::any_of(explicit_keys.begin(), explicit_keys.end(),
                                     [](const std::string& k) { return k.rfind("synth.", 0) == 0; });
  if (source == DataSource::files) {
    if (any_synth) throw ConfigError("data.source is files but synth.* keys are set; specify exactly one data source");
    for (const auto& [key, path] : {std::pair{"data.features", features_path}, std::pair{"data.classes", classes_path},
                                    std::pair{"data.edges", edges_path}})
      if (path.empty()) throw ConfigError("config key '" + std::string(key) + "' is required when data.source is files");
  } else {
    if (any_path) throw ConfigError("data.source is synth but data file paths are set; specify exactly one data source");
    synth.validate();
  }
  if (eval_split != "val" && eval_split != "held" && eval_split != "train")
    throw ConfigError("config key 'eval.split': expected val, held or train, got '" + eval_split + "'");
  if (!(gradcheck_tolerance > 0.0)) throw ConfigError("config key 'gradcheck.tolerance' must be > 0");
  if (!(gradcheck_eps > 0.0)) throw ConfigError("config key 'gradcheck.eps' must be > 0");
  train.validate();
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const Entry& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

void apply_assignment(AppConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  config.set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void apply_config_text(AppConfig& config, std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    try {
      apply_assignment(config, line);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(AppConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  apply_config_text(config, buffer.str(), path.string());
}

void write_config(std::ostream& out, const AppConfig& config) {
  for (const Entry& e : entries()) out << e.key << " = " << e.get(config) << '\n';
}

Dataset prepare_dataset(const AppConfig& config) {
  config.validate();
  Dataset d;
  if (config.source == DataSource::synth) {
    d.graph = generate_synthetic(config.synth).graph;
  } else {
    d.graph = load_graph(config.features_path, config.classes_path, config.edges_path, config.load);
  }
  if (!config.keep_unlabeled) d.graph = induced_labeled_subgraph(d.graph);
  d.split = split_nodes(d.graph, config.split, config.split_seed, config.stratified);
  if (config.standardize) d.graph = d.graph.with_features(standardize_features(d.graph.features(), d.split.train));
  return d;
}

}  // namespace atgat
