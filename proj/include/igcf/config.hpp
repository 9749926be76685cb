#pragma once

// INI experiment configuration. Defaults live in one tree; a file, then
// IGCF_<SECTION>_<KEY> environment variables, then command-line overrides are
// layered on top. The merged tree is what gets echoed into run manifests.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "igcf/errors.hpp"
#include "igcf/experiment.hpp"
#include "igcf/ingest.hpp"
#include "igcf/regret_lab.hpp"

namespace igcf {

namespace pt = boost::property_tree;

inline pt::ptree default_config_tree() {
  static const char* text = R"(
[run]
seed = 42
out = igcf_out
experiment = default

[data]
path =
format = csv_triplets
genres =
subsample = 1.0

[synthetic]
users = 200
items = 500
dim = 6
genres = 10
median_activity = 40
taste_tilt = 2.0
popularity_exponent = 0.8
drift_fraction = 0.1

[protocol]
name = cold_start
rounds = 40
slate = 1
test_users = 40
train_fraction = 0.5
switch_round = 60
replay = zero_fill
warm_history = true
signal = reward
checkpoints = 10,20,40

[graph]
scheme = lightgcn
depth = 3
teleport = 0.1

[pretrain]
dim = 16
prior_variance = 1.0
noise_variance = 1.0
feedback = continuous
learning_rate = 0.01
batch_size = 256
max_epochs = 300
convergence_tol = 0

[online]
mode = ucb_theorem1
gamma = 10
delta = 0.05
nu = 1.0
sigma_noise = 0.5

[baselines]
icf_c = 2.0
icf_lambda = 1.0

[policies]
list = igcf,icf_ucb,pop,random

[regret]
dim = 4
items = 50
sigma_noise = 0.5
item_bound = 1.0
item_scale = 0.5
mean_norm = 1.0
lambda_low = 0.25
lambda_bar = 1.0
reps = 200
rounds = 2000
checkpoints = 250,500,1000,2000
delta = 0.01
mode = ucb_theorem1
tasks = 100
gamma = 0.0
wide_variance = 10.0
k1 = 0
)";
  std::istringstream in(text);
  pt::ptree tree;
  pt::read_ini(in, tree);
  return tree;
}

// Overlays `extra` onto `base`; every key must already exist in base.
inline void merge_config(pt::ptree& base, const pt::ptree& extra, const std::string& origin) {
  for (const auto& [section, keys] : extra) {
    auto sec = base.get_child_optional(section);
    if (!sec) throw ConfigError(origin + ": unknown section [" + section + "]");
    if (keys.empty() && !keys.data().empty()) throw ConfigError(origin + ": top-level key '" + section + "'");
    for (const auto& [key, value] : keys) {
      if (!sec->get_child_optional(key)) throw ConfigError(origin + ": unknown key '" + key + "' in [" + section + "]");
      sec->put(key, value.data());
    }
  }
}

inline std::string env_name(const std::string& section, const std::string& key) {
  std::string name = "IGCF_" + section + "_" + key;
  for (char& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

inline void apply_env_overrides(pt::ptree& tree) {
  for (auto& [section, keys] : tree) {
    for (auto& [key, value] : keys) {
      if (const char* v = std::getenv(env_name(section, key).c_str())) value.put_value(std::string(v));
    }
  }
}

// "section.key=value" pairs.
inline void apply_overrides(pt::ptree& tree, const std::vector<std::string>& pairs) {
  for (const auto& p : pairs) {
    const auto eq = p.find('='), dot = p.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + p + "' is not section.key=value");
    }
    const std::string path = p.substr(0, eq);
    if (!tree.get_child_optional(path)) throw ConfigError("override names unknown setting '" + path + "'");
    tree.put(path, p.substr(eq + 1));
  }
}

inline pt::ptree load_config_tree(const std::string& path) {
  pt::ptree tree = default_config_tree();
  if (!path.empty()) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path + "' does not exist");
    pt::ptree file;
    try {
      pt::read_ini(path, file);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    merge_config(tree, file, path);
  }
  apply_env_overrides(tree);
  return tree;
}

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string out;
  std::string experiment;

  std::string data_path;
  DataFormat format = DataFormat::kCsvTriplets;
  std::string genres_path;
  double subsample = 1.0;
  SurrogateSpec synthetic;

  std::string protocol_name = "cold_start";
  ProtocolSpec protocol;
  std::vector<std::size_t> checkpoints;

  ModelSpec model;
  std::vector<std::string> policies;

  LabSpec lab;
  std::size_t regret_reps = 200;
  std::size_t regret_rounds = 2000;
  std::vector<std::size_t> regret_checkpoints;
  SelectionMode regret_mode = SelectionMode::kUcbTheorem1;
  double regret_delta = 0.01;
  std::size_t regret_tasks = 100;
  double regret_gamma = 0.0;
  double regret_wide_variance = 10.0;
  double regret_k1 = 0.0;
};

namespace detail {

template <class T>
T config_get(const pt::ptree& tree, const std::string& section, const std::string& key) {
  const auto raw = tree.get<std::string>(section + "." + key);
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1" || raw == "yes") return true;
      if (raw == "false" || raw == "0" || raw == "no") return false;
      throw std::invalid_argument(raw);
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return v;
    } else {
      if (!raw.empty() && raw[0] == '-') throw std::invalid_argument(raw);
      std::size_t used = 0;
      const auto v = std::stoull(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return static_cast<T>(v);
    }
  } catch (const std::logic_error&) {
    throw ConfigError("[" + section + "] " + key + " = '" + raw + "' is not a valid value");
  }
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto part : split(s, ",")) {
    if (!part.empty()) out.emplace_back(part);
  }
  return out;
}

inline std::vector<std::size_t> size_list(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& part : split_list(s)) {
    std::size_t used = 0, v = 0;
    try {
      v = std::stoull(part, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != part.size() || v == 0 || part[0] == '-') throw ConfigError(what + ": bad entry '" + part + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const pt::ptree& tree) {
  using detail::config_get;
  ExperimentConfig c;
  c.seed = config_get<std::uint64_t>(tree, "run", "seed");
  c.out = config_get<std::string>(tree, "run", "out");
  c.experiment = config_get<std::string>(tree, "run", "experiment");

  c.data_path = config_get<std::string>(tree, "data", "path");
  c.format = parse_format(config_get<std::string>(tree, "data", "format"));
  c.genres_path = config_get<std::string>(tree, "data", "genres");
  c.subsample = config_get<double>(tree, "data", "subsample");
  if (!(c.subsample > 0.0 && c.subsample <= 1.0)) throw ConfigError("[data] subsample must lie in (0,1]");

  auto& s = c.synthetic;
  s.num_users = config_get<std::size_t>(tree, "synthetic", "users");
  s.num_items = config_get<std::size_t>(tree, "synthetic", "items");
  s.dim = config_get<int>(tree, "synthetic", "dim");
  s.num_genres = config_get<std::size_t>(tree, "synthetic", "genres");
  s.median_activity = config_get<double>(tree, "synthetic", "median_activity");
  s.taste_tilt = config_get<double>(tree, "synthetic", "taste_tilt");
  s.popularity_exponent = config_get<double>(tree, "synthetic", "popularity_exponent");
  s.drift_fraction = config_get<double>(tree, "synthetic", "drift_fraction");
  s.max_activity = std::min(s.max_activity, s.num_items);
  s.min_activity = std::min(s.min_activity, s.max_activity);

  c.protocol_name = config_get<std::string>(tree, "protocol", "name");
  auto& p = c.protocol;
  if (c.protocol_name != "regret") p.protocol = parse_protocol(c.protocol_name);
  p.rounds = config_get<std::size_t>(tree, "protocol", "rounds");
  p.slate = config_get<std::size_t>(tree, "protocol", "slate");
  p.test_users = config_get<std::size_t>(tree, "protocol", "test_users");
  p.train_fraction = config_get<double>(tree, "protocol", "train_fraction");
  p.switch_round = config_get<std::size_t>(tree, "protocol", "switch_round");
  const auto replay = config_get<std::string>(tree, "protocol", "replay");
  if (replay == "zero_fill") p.replay = ReplayProtocol::kZeroFill;
  else if (replay == "fully_observed") p.replay = ReplayProtocol::kFullyObserved;
  else throw ConfigError("[protocol] replay must be zero_fill or fully_observed");
  p.warm_history = config_get<bool>(tree, "protocol", "warm_history");
  p.signal = parse_signal(config_get<std::string>(tree, "protocol", "signal"));
  if (p.rounds == 0 || p.slate == 0) throw ConfigError("[protocol] rounds and slate must be >= 1");
  c.checkpoints = detail::size_list(config_get<std::string>(tree, "protocol", "checkpoints"), "[protocol] checkpoints");
  for (std::size_t t : c.checkpoints)
    if (t > p.rounds) throw ConfigError("[protocol] checkpoint " + std::to_string(t) + " exceeds rounds");

  auto& m = c.model;
  const auto scheme = parse_scheme(config_get<std::string>(tree, "graph", "scheme"));
  const int depth = config_get<int>(tree, "graph", "depth");
  const double teleport = config_get<double>(tree, "graph", "teleport");
  m.propagation = scheme == Scheme::kLightGcn ? PropagationSpec::lightgcn(depth)
                  : scheme == Scheme::kSgcn   ? PropagationSpec::sgcn(depth)
                                              : PropagationSpec::appnp(depth, teleport);
  m.propagation.validate();
  auto& pre = m.pretrain;
  pre.dim = config_get<int>(tree, "pretrain", "dim");
  pre.prior_variance = config_get<double>(tree, "pretrain", "prior_variance");
  pre.noise_variance = config_get<double>(tree, "pretrain", "noise_variance");
  pre.feedback = parse_feedback(config_get<std::string>(tree, "pretrain", "feedback"));
  pre.learning_rate = config_get<double>(tree, "pretrain", "learning_rate");
  pre.batch_size = config_get<std::size_t>(tree, "pretrain", "batch_size");
  pre.max_epochs = config_get<int>(tree, "pretrain", "max_epochs");
  pre.convergence_tol = config_get<double>(tree, "pretrain", "convergence_tol");
  pre.seed = c.seed;
  pre.validate();
  m.online.mode = parse_selection_mode(config_get<std::string>(tree, "online", "mode"));
  m.gamma = config_get<double>(tree, "online", "gamma");
  m.online.delta = config_get<double>(tree, "online", "delta");
  m.online.nu = config_get<double>(tree, "online", "nu");
  m.online.sigma_noise = config_get<double>(tree, "online", "sigma_noise");
  m.online.seed = c.seed;
  m.online.validate();
  if (!(m.gamma >= 0.0)) throw ConfigError("[online] gamma must be >= 0");
  m.icf_c = config_get<double>(tree, "baselines", "icf_c");
  m.icf_lambda = config_get<double>(tree, "baselines", "icf_lambda");
  if (!(m.icf_lambda > 0.0) || !(m.icf_c >= 0.0)) throw ConfigError("[baselines] need icf_lambda > 0 and icf_c >= 0");

  c.policies = detail::split_list(config_get<std::string>(tree, "policies", "list"));
  if (c.policies.empty()) throw ConfigError("[policies] list is empty");
  const auto known = known_policies();
  for (const auto& name : c.policies)
    if (std::find(known.begin(), known.end(), name) == known.end()) throw ConfigError("unknown policy '" + name + "'");

  auto& lab = c.lab;
  lab.dim = config_get<int>(tree, "regret", "dim");
  lab.num_items = config_get<std::size_t>(tree, "regret", "items");
  lab.sigma_noise = config_get<double>(tree, "regret", "sigma_noise");
  lab.item_bound = config_get<double>(tree, "regret", "item_bound");
  lab.item_scale = config_get<double>(tree, "regret", "item_scale");
  lab.mean_norm = config_get<double>(tree, "regret", "mean_norm");
  lab.lambda_low = config_get<double>(tree, "regret", "lambda_low");
  lab.lambda_bar = config_get<double>(tree, "regret", "lambda_bar");
  c.regret_reps = config_get<std::size_t>(tree, "regret", "reps");
  c.regret_rounds = config_get<std::size_t>(tree, "regret", "rounds");
  c.regret_checkpoints = detail::size_list(config_get<std::string>(tree, "regret", "checkpoints"), "[regret] checkpoints");
  for (std::size_t t : c.regret_checkpoints)
    if (t > c.regret_rounds) throw ConfigError("[regret] checkpoint " + std::to_string(t) + " exceeds rounds");
  c.regret_delta = config_get<double>(tree, "regret", "delta");
  c.regret_mode = parse_selection_mode(config_get<std::string>(tree, "regret", "mode"));
  c.regret_tasks = config_get<std::size_t>(tree, "regret", "tasks");
  c.regret_gamma = config_get<double>(tree, "regret", "gamma");
  c.regret_wide_variance = config_get<double>(tree, "regret", "wide_variance");
  c.regret_k1 = config_get<double>(tree, "regret", "k1");
  if (!(c.regret_gamma >= 0.0) || !(c.regret_wide_variance > 0.0)) {
    throw ConfigError("[regret] needs gamma >= 0 and wide_variance > 0");
  }
  if (c.regret_reps == 0 || c.regret_rounds == 0) throw ConfigError("[regret] reps and rounds must be >= 1");
  return c;
}

// The configured corpus: a file when [data] path is set, else the planted
// surrogate; then the user subsample.
inline InteractionDataset load_dataset(const ExperimentConfig& c) {
  InteractionDataset data;
  if (c.data_path.empty()) {
    data = make_surrogate(c.synthetic, c.seed);
  } else {
    data = ingest_file(c.data_path, c.format);
    if (!c.genres_path.empty()) attach_genres_file(data, c.genres_path, c.format);
  }
  return subsample_users(data, c.subsample, c.seed ^ 0x5b5bu);
}

inline std::string config_to_ini(const pt::ptree& tree) {
  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

}  // namespace igcf
