#pragma once

// Replay experiments end to end: a planted synthetic corpus for desk runs,
// train/test splits for the cold-start, drift and top-k protocols, offline
// model fitting, and a policy factory keyed by name.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "igcf/baselines.hpp"
#include "igcf/dataset.hpp"
#include "igcf/errors.hpp"
#include "igcf/eval.hpp"
#include "igcf/graph.hpp"
#include "igcf/online.hpp"
#include "igcf/policies.hpp"
#include "igcf/pretrain.hpp"

namespace igcf {

// Users and items share genre-centred latent tastes; users observe items with
// probability tilted by item popularity (Zipf) and by affinity, and rate them
// 1..5 with affinity-driven mean. Drifters switch to a second taste halfway
// through their timeline.
struct SurrogateSpec {
  std::size_t num_users = 200;
  std::size_t num_items = 500;
  int dim = 6;
  std::size_t num_genres = 10;
  double median_activity = 40.0;
  std::size_t min_activity = 15;
  std::size_t max_activity = 150;
  double popularity_exponent = 0.8;
  double taste_tilt = 2.0;
  double drift_fraction = 0.1;
};

inline InteractionDataset make_surrogate(const SurrogateSpec& spec, std::uint64_t seed) {
  if (spec.num_users == 0 || spec.num_items == 0 || spec.dim < 1 || spec.num_genres == 0) {
    throw ConfigError("surrogate sizes must be positive");
  }
  if (spec.max_activity > spec.num_items || spec.min_activity > spec.max_activity) {
    throw ConfigError("surrogate activity range must fit in the catalog");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> unif;
  const double root_d = std::sqrt(static_cast<double>(spec.dim));

  Eigen::MatrixXd centroids(spec.dim, static_cast<Eigen::Index>(spec.num_genres));
  for (Eigen::Index j = 0; j < centroids.size(); ++j) centroids.data()[j] = z(rng);
  for (Eigen::Index g = 0; g < centroids.cols(); ++g) centroids.col(g).normalize();

  InteractionDataset data;
  data.num_users = spec.num_users;
  data.num_items = spec.num_items;
  data.rule = SatisfactionRule::ratings();
  data.item_genres.assign(spec.num_items, std::vector<double>(spec.num_genres, 0.0));

  std::uniform_int_distribution<std::size_t> pick_genre(0, spec.num_genres - 1);
  Eigen::MatrixXd items(spec.dim, static_cast<Eigen::Index>(spec.num_items));
  for (std::size_t i = 0; i < spec.num_items; ++i) {
    const std::size_t g = pick_genre(rng);
    data.item_genres[i][g] = 1.0;
    if (unif(rng) < 0.3) data.item_genres[i][pick_genre(rng)] = 1.0;
    for (int k = 0; k < spec.dim; ++k) items(k, static_cast<Eigen::Index>(i)) = centroids(k, g) + 0.5 * z(rng) / root_d;
  }
  std::vector<double> log_pop(spec.num_items);
  std::vector<std::size_t> rank(spec.num_items);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::shuffle(rank.begin(), rank.end(), rng);
  for (std::size_t i = 0; i < spec.num_items; ++i) {
    log_pop[i] = -spec.popularity_exponent * std::log(static_cast<double>(rank[i] + 1));
  }

  auto taste = [&] {
    Eigen::VectorXd u = centroids.col(static_cast<Eigen::Index>(pick_genre(rng)));
    if (unif(rng) < 0.5) u += 0.5 * centroids.col(static_cast<Eigen::Index>(pick_genre(rng)));
    for (int k = 0; k < spec.dim; ++k) u[k] += 0.3 * z(rng) / root_d;
    return u;
  };
  // Weighted sampling without replacement by exponential keys.
  auto draw = [&](const Eigen::VectorXd& u, std::size_t count, std::vector<bool>& taken) {
    std::vector<std::pair<double, std::size_t>> keys;
    for (std::size_t i = 0; i < spec.num_items; ++i) {
      if (taken[i]) continue;
      const double logw = log_pop[i] + spec.taste_tilt * u.dot(items.col(static_cast<Eigen::Index>(i)));
      keys.emplace_back(std::log(-std::log(1.0 - unif(rng))) - logw, i);
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end());
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < count; ++j) {
      out.push_back(keys[j].second);
      taken[keys[j].second] = true;
    }
    return out;
  };

  std::lognormal_distribution<double> activity(std::log(spec.median_activity), 0.7);
  std::int64_t clock = 1'000'000;
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    const auto n = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(activity(rng))), spec.min_activity,
                                           spec.max_activity);
    const bool drifter = unif(rng) < spec.drift_fraction;
    const Eigen::VectorXd first = taste();
    const Eigen::VectorXd second = drifter ? taste() : first;
    std::vector<bool> taken(spec.num_items, false);
    const std::size_t half = n / 2;
    for (int phase = 0; phase < 2; ++phase) {
      const Eigen::VectorXd& t = phase == 0 ? first : second;
      for (std::size_t i : draw(t, phase == 0 ? half : n - half, taken)) {
        const double mean = 3.0 + 1.5 * t.dot(items.col(static_cast<Eigen::Index>(i)));
        const double r = std::clamp(std::round(mean + 0.8 * z(rng)), 1.0, 5.0);
        data.records.push_back({u, i, r, clock});
        clock += 1 + static_cast<std::int64_t>(100 * unif(rng));
      }
    }
  }
  return data;
}

// Keeps a seeded random fraction of users (re-indexed in ascending order) and
// the full item catalog.
inline InteractionDataset subsample_users(const InteractionDataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("subsample fraction must lie in (0,1]");
  if (fraction == 1.0) return data;
  std::vector<std::size_t> users(data.num_users);
  std::iota(users.begin(), users.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(users.begin(), users.end(), rng);
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * data.num_users)));
  users.resize(std::min(keep, users.size()));
  std::sort(users.begin(), users.end());
  std::vector<std::size_t> remap(data.num_users, SIZE_MAX);
  for (std::size_t j = 0; j < users.size(); ++j) remap[users[j]] = j;

  InteractionDataset out = data;
  out.num_users = users.size();
  out.records.clear();
  for (const auto& r : data.records)
    if (remap[r.user] != SIZE_MAX) out.records.push_back({remap[r.user], r.item, r.value, r.timestamp});
  if (!data.user_ids.empty()) {
    out.user_ids.clear();
    for (std::size_t u : users) out.user_ids.push_back(data.user_ids[u]);
  }
  return out;
}

enum class Protocol { kColdStart, kDrift, kTopK };

inline Protocol parse_protocol(const std::string& s) {
  if (s == "cold_start") return Protocol::kColdStart;
  if (s == "drift") return Protocol::kDrift;
  if (s == "topk") return Protocol::kTopK;
  throw ConfigError("unknown protocol '" + s + "' (cold_start, drift, topk, regret)");
}

struct ProtocolSpec {
  Protocol protocol = Protocol::kColdStart;
  std::size_t rounds = 40;
  std::size_t slate = 1;
  std::size_t test_users = 40;
  double train_fraction = 0.5;
  std::size_t switch_round = 60;
  ReplayProtocol replay = ReplayProtocol::kZeroFill;
  bool warm_history = true;  // drift: seed users with their earlier-half records
  LearningSignal signal = LearningSignal::kTheta;  // training target and online feedback
};

struct ReplaySplit {
  std::vector<Observation> train;  // targets follow the learning signal
  std::vector<std::size_t> popularity;  // satisfied training records per item
  ReplayEnvironment env{0, SatisfactionRule::ratings(), ReplayProtocol::kZeroFill};
  std::vector<EpisodeStart> starts;
  std::map<std::size_t, std::size_t> satisfied;  // per test user
  std::size_t num_users = 0;
  std::size_t num_items = 0;
};

inline std::uint64_t episode_seed(std::uint64_t seed, std::size_t user) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(user), 0x5eedu};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Test users never reach training; every other record enters training with
// probability train_fraction under one global seeded mask.
inline ReplaySplit make_split(const InteractionDataset& data, const ProtocolSpec& p, std::uint64_t seed) {
  if (!(p.train_fraction > 0.0 && p.train_fraction <= 1.0)) throw ConfigError("train_fraction must lie in (0,1]");
  if (p.test_users == 0) throw ConfigError("need at least one test user");
  ReplaySplit split;
  auto target = [&](double value) { return p.signal == LearningSignal::kTheta ? data.rule.theta(value) : value; };
  split.num_users = data.num_users;
  split.num_items = data.num_items;
  split.env = ReplayEnvironment(data.num_items, data.rule, p.replay);
  std::unordered_set<std::size_t> test;

  if (p.protocol == Protocol::kDrift) {
    if (p.switch_round >= p.rounds) throw ConfigError("drift switch_round must be below the round count");
    const auto drift = build_drift_split(data, p.test_users, p.switch_round);
    for (const auto& du : drift.test) {
      test.insert(du.user);
      split.env.set_drift(du.user, drift_tables(data, du, p.switch_round));
      EpisodeStart start{du.user, episode_seed(seed, du.user), {}};
      if (p.warm_history) {
        for (std::size_t r : du.set1) start.history.emplace_back(data.records[r].item, target(data.records[r].value));
      }
      split.starts.push_back(std::move(start));
    }
  } else {
    for (std::size_t u : most_active_users(data, p.test_users)) {
      test.insert(u);
      split.starts.push_back({u, episode_seed(seed, u), {}});
    }
    for (const auto& r : data.records)
      if (test.contains(r.user)) split.env.add(r.user, r.item, r.value);
  }
  std::sort(split.starts.begin(), split.starts.end(),
            [](const EpisodeStart& a, const EpisodeStart& b) { return a.user < b.user; });
  for (const auto& s : split.starts) split.satisfied[s.user] = split.env.satisfied_count(s.user);

  std::mt19937_64 rng(seed ^ 0x7a11u);
  std::bernoulli_distribution keep(p.train_fraction);
  std::map<std::pair<std::size_t, std::size_t>, double> last;
  for (const auto& r : data.records) {
    const bool kept = keep(rng);
    if (!kept || test.contains(r.user)) continue;
    split.train.push_back({r.user, r.item, target(r.value)});
    last[{r.user, r.item}] = r.value;
  }
  if (split.train.empty()) throw DataError("training split is empty");
  split.popularity.assign(data.num_items, 0);
  for (const auto& [key, value] : last)
    if (data.rule.satisfied(value)) ++split.popularity[key.second];
  return split;
}

// Offline fits shared by every policy in one run.
struct ModelSpec {
  PropagationSpec propagation = PropagationSpec::lightgcn(3);
  PretrainConfig pretrain;
  double gamma = 0.1;
  PolicyConfig online;
  double icf_c = 1.0;
  double icf_lambda = 1.0;
};

struct FittedModels {
  std::optional<PretrainedModel> graph;  // iGCF item vectors and meta prior
  std::optional<PretrainedModel> flat;   // K = 0 fit for ICF / MF
  std::optional<MetaPrior> meta;
  std::vector<std::size_t> popularity;
};

// Meta prior over users that have training edges; isolated users carry no
// information.
inline MetaPrior meta_prior_from(const PretrainedModel& model, std::span<const Observation> train, double gamma) {
  std::vector<bool> seen(model.num_users, false);
  for (const auto& o : train) seen[o.user] = true;
  std::vector<Eigen::Index> cols;
  for (std::size_t u = 0; u < model.num_users; ++u)
    if (seen[u]) cols.push_back(static_cast<Eigen::Index>(u));
  Eigen::MatrixXd users(model.user_vectors.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) users.col(static_cast<Eigen::Index>(j)) = model.user_vectors.col(cols[j]);
  return build_meta_prior(users, gamma);
}

inline bool needs_graph_model(const std::string& policy) { return policy.rfind("igcf", 0) == 0; }
inline bool needs_flat_model(const std::string& policy) {
  return policy == "icf_ucb" || policy == "icf_ts" || policy == "mf";
}

inline FittedModels fit_models(const ReplaySplit& split, const ModelSpec& spec, const std::vector<std::string>& policies,
                               const std::optional<PretrainedModel>& preloaded = std::nullopt) {
  FittedModels fitted;
  const bool graph = std::any_of(policies.begin(), policies.end(), needs_graph_model);
  const bool flat = std::any_of(policies.begin(), policies.end(), needs_flat_model);
  const auto adj = adjacency_from_observations(split.train, split.num_users, split.num_items);
  if (graph) {
    fitted.graph = preloaded ? *preloaded : pretrain(split.train, adj, spec.propagation, spec.pretrain);
    fitted.meta = meta_prior_from(*fitted.graph, split.train, spec.gamma);
  }
  if (flat) fitted.flat = pretrain(split.train, adj, PropagationSpec::lightgcn(0), spec.pretrain);
  fitted.popularity = split.popularity;
  return fitted;
}

inline std::vector<std::string> known_policies() {
  return {"igcf",   "igcf-meta", "igcf-explore", "igcf-meta-explore", "igcf-ts", "igcf-linucb",
          "icf_ucb", "icf_ts",   "mf",           "pop",               "random"};
}

// Ablations follow the policy name: "-meta" swaps the meta prior for
// N(0, prior_variance I) and "-explore" turns the bonus off.
inline std::unique_ptr<Policy> make_policy(const std::string& name, const FittedModels& fitted, const ModelSpec& spec) {
  const double sigma = spec.online.sigma_noise;
  auto vectors = [](const std::optional<PretrainedModel>& m, const std::string& who) {
    if (!m) throw ConfigError("policy '" + who + "' needs a fitted model");
    return std::make_shared<const Eigen::MatrixXd>(m->item_vectors);
  };
  if (needs_graph_model(name)) {
    PolicyConfig online = spec.online;
    bool use_meta = true;
    if (name == "igcf-meta" || name == "igcf-meta-explore") use_meta = false;
    if (name == "igcf-explore" || name == "igcf-meta-explore") online.mode = SelectionMode::kGreedy;
    else if (name == "igcf-ts") online.mode = SelectionMode::kThompson;
    else if (name == "igcf-linucb") online.mode = SelectionMode::kLinUcbNu;
    else if (name != "igcf" && name != "igcf-meta") throw ConfigError("unknown policy '" + name + "'");
    if (!fitted.meta) throw ConfigError("policy '" + name + "' needs a meta prior");
    return std::make_unique<IgcfPolicy>(name, vectors(fitted.graph, name), *fitted.meta, online, use_meta,
                                        spec.pretrain.prior_variance);
  }
  if (name == "icf_ucb")
    return std::make_unique<IcfPolicy>(name, vectors(fitted.flat, name), IcfMode::kUcb, spec.icf_c, spec.icf_lambda, sigma);
  if (name == "icf_ts")
    return std::make_unique<IcfPolicy>(name, vectors(fitted.flat, name), IcfMode::kThompson, 0.0, spec.icf_lambda,
                                       sigma, spec.online.seed);
  if (name == "mf") return std::make_unique<IcfPolicy>(name, vectors(fitted.flat, name), IcfMode::kUcb, 0.0, spec.icf_lambda, sigma);
  if (name == "pop") return std::make_unique<PopPolicy>(name, fitted.popularity);
  if (name == "random") return std::make_unique<RandomPolicy>(name, spec.online.seed);
  throw ConfigError("unknown policy '" + name + "'");
}

inline std::vector<EpisodeLog> run_policy(const ReplaySplit& split, Policy& policy, std::size_t rounds, std::size_t k,
                                          LearningSignal signal = LearningSignal::kTheta) {
  std::vector<EpisodeLog> logs;
  logs.reserve(split.starts.size());
  for (const auto& start : split.starts) logs.push_back(run_episode(split.env, policy, start, rounds, k, signal));
  return logs;
}

struct Checkpoint {
  std::size_t t = 0;
  double precision = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
};

inline std::vector<Checkpoint> checkpoints(const std::vector<EpisodeLog>& logs, const ReplaySplit& split,
                                           std::span<const std::size_t> ts, std::size_t k) {
  std::vector<Checkpoint> out;
  for (std::size_t t : ts) {
    out.push_back({t, precision_at(logs, t), recall_at(logs, t, split.satisfied), ndcg_at(logs, k, t)});
  }
  return out;
}

}  // namespace igcf
