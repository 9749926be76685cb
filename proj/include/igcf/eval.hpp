#pragma once

// Offline replay: the environment answers with logged feedback, episodes run
// a policy for T rounds without repeats, and cumulative metrics summarize the
// logs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "igcf/dataset.hpp"
#include "igcf/errors.hpp"
#include "igcf/policies.hpp"

namespace igcf {

enum class ReplayProtocol { kZeroFill, kFullyObserved };

struct Feedback {
  double theta = 0.0;
  double reward = 0.0;
  bool observed = false;
};

class ReplayEnvironment {
 public:
  // Two ground-truth tables for a drifting user: rounds 1..switch_round read
  // `before`, later rounds read `after`.
  struct Drift {
    std::unordered_map<std::size_t, double> before;
    std::unordered_map<std::size_t, double> after;
    std::size_t switch_round = 60;
  };

  ReplayEnvironment(std::size_t num_items, SatisfactionRule rule, ReplayProtocol protocol)
      : num_items_(num_items), rule_(rule), protocol_(protocol) {}

  // Records for later lookup; a repeated (user, item) keeps the last value.
  static ReplayEnvironment from_dataset(const InteractionDataset& data, ReplayProtocol protocol) {
    ReplayEnvironment env(data.num_items, data.rule, protocol);
    for (const auto& r : data.records) env.add(r.user, r.item, r.value);
    return env;
  }

  void add(std::size_t user, std::size_t item, double value) {
    if (item >= num_items_) throw DataError("item " + std::to_string(item) + " outside catalog");
    table_[user][item] = value;
  }

  void set_drift(std::size_t user, Drift drift) { drift_[user] = std::move(drift); }
  bool has_drift(std::size_t user) const { return drift_.contains(user); }

  std::size_t num_items() const { return num_items_; }
  const SatisfactionRule& rule() const { return rule_; }
  ReplayProtocol protocol() const { return protocol_; }

  Feedback feedback(std::size_t user, std::size_t item, std::size_t round) const {
    const std::unordered_map<std::size_t, double>* row = nullptr;
    if (auto d = drift_.find(user); d != drift_.end()) {
      row = round <= d->second.switch_round ? &d->second.before : &d->second.after;
    } else if (auto t = table_.find(user); t != table_.end()) {
      row = &t->second;
    }
    if (row) {
      if (auto hit = row->find(item); hit != row->end()) return {rule_.theta(hit->second), hit->second, true};
    }
    if (protocol_ == ReplayProtocol::kFullyObserved) {
      throw DataError("fully observed protocol has no record for user " + std::to_string(user) + ", item " +
                      std::to_string(item));
    }
    return {0.0, 0.0, false};
  }

  // Distinct items the user is satisfied with across all of their ground truth.
  std::size_t satisfied_count(std::size_t user) const {
    std::vector<std::size_t> items;
    auto tally = [&](const std::unordered_map<std::size_t, double>& row) {
      for (const auto& [item, value] : row)
        if (rule_.satisfied(value)) items.push_back(item);
    };
    if (auto d = drift_.find(user); d != drift_.end()) {
      tally(d->second.before);
      tally(d->second.after);
    } else if (auto t = table_.find(user); t != table_.end()) {
      tally(t->second);
    }
    std::sort(items.begin(), items.end());
    return static_cast<std::size_t>(std::unique(items.begin(), items.end()) - items.begin());
  }

 private:
  std::size_t num_items_;
  SatisfactionRule rule_;
  ReplayProtocol protocol_;
  std::unordered_map<std::size_t, std::unordered_map<std::size_t, double>> table_;
  std::unordered_map<std::size_t, Drift> drift_;
};

// What the policy learns from: the satisfaction signal theta or the raw
// logged value (0 when unobserved under zero fill).
enum class LearningSignal { kTheta, kReward };

inline LearningSignal parse_signal(const std::string& s) {
  if (s == "theta") return LearningSignal::kTheta;
  if (s == "reward") return LearningSignal::kReward;
  throw ConfigError("unknown learning signal '" + s + "' (theta, reward)");
}

struct RoundLog {
  std::vector<std::size_t> slate;
  std::vector<double> theta;
  std::vector<double> reward;
};

struct EpisodeLog {
  std::size_t user = 0;
  std::vector<RoundLog> rounds;
};

// T rounds of k-item slates; candidates are all items not yet recommended to
// this user. Feedback for the whole slate is applied after selection, in slate
// order.
inline EpisodeLog run_episode(const ReplayEnvironment& env, Policy& policy, const EpisodeStart& start,
                              std::size_t rounds, std::size_t k,
                              LearningSignal signal = LearningSignal::kTheta) {
  if (k == 0) throw ConfigError("slate size must be >= 1");
  if (rounds * k > env.num_items()) {
    throw ConfigError("candidate exhaustion: " + std::to_string(rounds) + " rounds of " + std::to_string(k) +
                      " need more than the " + std::to_string(env.num_items()) + " items available");
  }
  std::vector<bool> used(env.num_items(), false);
  std::vector<std::size_t> candidates;
  candidates.reserve(env.num_items());
  EpisodeLog log{start.user, {}};
  log.rounds.reserve(rounds);
  policy.begin_episode(start);
  for (std::size_t t = 1; t <= rounds; ++t) {
    candidates.clear();
    for (std::size_t i = 0; i < used.size(); ++i)
      if (!used[i]) candidates.push_back(i);
    RoundLog round;
    round.slate = policy.select(candidates, k, t);
    if (round.slate.size() != k) throw ConfigError("policy " + policy.name() + " returned a short slate");
    for (std::size_t item : round.slate) {
      if (item >= used.size() || used[item]) {
        throw ConfigError("policy " + policy.name() + " repeated or invented item " + std::to_string(item));
      }
      used[item] = true;
      const Feedback fb = env.feedback(start.user, item, t);
      round.theta.push_back(fb.theta);
      round.reward.push_back(fb.reward);
    }
    for (std::size_t j = 0; j < k; ++j) {
      policy.observe(round.slate[j], signal == LearningSignal::kTheta ? round.theta[j] : round.reward[j]);
    }
    log.rounds.push_back(std::move(round));
  }
  return log;
}

namespace detail {

inline void require_rounds(std::span<const EpisodeLog> logs, std::size_t t) {
  for (const auto& log : logs) {
    if (log.rounds.size() < t) {
      throw ConfigError("T=" + std::to_string(t) + " exceeds the " + std::to_string(log.rounds.size()) +
                        " logged rounds of user " + std::to_string(log.user));
    }
  }
}

inline double theta_sum(const EpisodeLog& log, std::size_t t) {
  double s = 0.0;
  for (std::size_t r = 0; r < t; ++r)
    for (double v : log.rounds[r].theta) s += v;
  return s;
}

// Sums in user-id order so the result does not depend on log order.
inline double ordered_mean(std::vector<std::pair<std::size_t, double>> per_user) {
  if (per_user.empty()) return 0.0;
  std::sort(per_user.begin(), per_user.end());
  double total = 0.0;
  for (const auto& [user, v] : per_user) total += v;
  return total / static_cast<double>(per_user.size());
}

}  // namespace detail

// Mean over users of the summed theta over the first T rounds.
inline double precision_at(std::span<const EpisodeLog> logs, std::size_t t) {
  detail::require_rounds(logs, t);
  std::vector<std::pair<std::size_t, double>> per_user;
  for (const auto& log : logs) per_user.emplace_back(log.user, detail::theta_sum(log, t));
  return detail::ordered_mean(std::move(per_user));
}

// Users with a zero satisfied count are skipped and reported in `excluded`.
inline double recall_at(std::span<const EpisodeLog> logs, std::size_t t,
                        const std::map<std::size_t, std::size_t>& satisfied,
                        std::vector<std::size_t>* excluded = nullptr) {
  detail::require_rounds(logs, t);
  std::vector<std::pair<std::size_t, double>> per_user;
  for (const auto& log : logs) {
    const auto it = satisfied.find(log.user);
    if (it == satisfied.end() || it->second == 0) {
      if (excluded) excluded->push_back(log.user);
      continue;
    }
    per_user.emplace_back(log.user, detail::theta_sum(log, t) / static_cast<double>(it->second));
  }
  return detail::ordered_mean(std::move(per_user));
}

// nDCG of one slate's first k entries against the ideal order of the same
// slate; an all-zero slate scores 0.
inline double round_ndcg(std::span<const double> theta, std::size_t k) {
  const std::size_t n = std::min(k, theta.size());
  auto dcg = [n](std::span<const double> g) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (std::exp2(g[j]) - 1.0) / std::log2(static_cast<double>(j) + 2.0);
    return s;
  };
  std::vector<double> ideal(theta.begin(), theta.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double z = dcg(ideal);
  return z > 0.0 ? dcg(theta) / z : 0.0;
}

// Mean over users of the per-round nDCG@k summed over the first T rounds.
inline double ndcg_at(std::span<const EpisodeLog> logs, std::size_t k, std::size_t t) {
  detail::require_rounds(logs, t);
  std::vector<std::pair<std::size_t, double>> per_user;
  for (const auto& log : logs) {
    double sum = 0.0;
    for (std::size_t r = 0; r < t; ++r) sum += round_ndcg(log.rounds[r].theta, k);
    per_user.emplace_back(log.user, sum);
  }
  return detail::ordered_mean(std::move(per_user));
}

// The n users with the most records; ties by ascending index.
inline std::vector<std::size_t> most_active_users(const InteractionDataset& data, std::size_t n) {
  std::vector<std::size_t> counts(data.num_users, 0);
  for (const auto& r : data.records) ++counts.at(r.user);
  std::vector<std::size_t> users(data.num_users);
  std::iota(users.begin(), users.end(), std::size_t{0});
  std::stable_sort(users.begin(), users.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  users.resize(std::min(n, users.size()));
  std::sort(users.begin(), users.end());
  return users;
}

struct DriftUser {
  std::size_t user = 0;
  std::vector<std::size_t> set1;  // record indices, earlier half
  std::vector<std::size_t> set2;  // record indices, later half
  double similarity = 0.0;
};

struct DriftSplit {
  std::vector<DriftUser> test;  // lowest genre similarity first
  std::vector<std::size_t> train_users;
  std::size_t switch_round = 60;
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    dot += a[j] * b[j];
    na += a[j] * a[j];
    nb += b[j] * b[j];
  }
  return dot / std::sqrt(na * nb);
}

// Each user's records sorted by time and cut into equal halves (the later
// half takes the odd one). Users whose halves have a zero genre vector, or
// fewer than two records, are never test users.
inline DriftSplit build_drift_split(const InteractionDataset& data, std::size_t num_test_users,
                                    std::size_t switch_round = 60) {
  if (!data.has_genres()) throw DataError("drift protocol needs item genre vectors; this dataset has none");
  const std::size_t genres = data.item_genres.front().size();
  std::vector<std::vector<std::size_t>> by_user(data.num_users);
  for (std::size_t r = 0; r < data.records.size(); ++r) by_user.at(data.records[r].user).push_back(r);

  std::vector<DriftUser> eligible;
  std::vector<std::size_t> ineligible;
  for (std::size_t u = 0; u < data.num_users; ++u) {
    auto& recs = by_user[u];
    std::stable_sort(recs.begin(), recs.end(), [&](std::size_t a, std::size_t b) {
      return data.records[a].timestamp < data.records[b].timestamp;
    });
    const std::size_t half = recs.size() / 2;
    DriftUser du{u, {recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(half)},
                 {recs.begin() + static_cast<std::ptrdiff_t>(half), recs.end()}, 0.0};
    std::vector<double> g1(genres, 0.0), g2(genres, 0.0);
    for (std::size_t r : du.set1)
      for (std::size_t j = 0; j < genres; ++j) g1[j] += data.item_genres.at(data.records[r].item)[j];
    for (std::size_t r : du.set2)
      for (std::size_t j = 0; j < genres; ++j) g2[j] += data.item_genres.at(data.records[r].item)[j];
    const bool empty1 = std::all_of(g1.begin(), g1.end(), [](double v) { return v == 0.0; });
    const bool empty2 = std::all_of(g2.begin(), g2.end(), [](double v) { return v == 0.0; });
    if (half == 0 || empty1 || empty2) {
      ineligible.push_back(u);
      continue;
    }
    du.similarity = cosine(g1, g2);
    eligible.push_back(std::move(du));
  }
  std::stable_sort(eligible.begin(), eligible.end(),
                   [](const DriftUser& a, const DriftUser& b) { return a.similarity < b.similarity; });
  DriftSplit split;
  split.switch_round = switch_round;
  const std::size_t n = std::min(num_test_users, eligible.size());
  split.test.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t j = n; j < eligible.size(); ++j) split.train_users.push_back(eligible[j].user);
  split.train_users.insert(split.train_users.end(), ineligible.begin(), ineligible.end());
  std::sort(split.train_users.begin(), split.train_users.end());
  return split;
}

inline ReplayEnvironment::Drift drift_tables(const InteractionDataset& data, const DriftUser& user,
                                             std::size_t switch_round) {
  ReplayEnvironment::Drift drift;
  drift.switch_round = switch_round;
  for (std::size_t r : user.set1) drift.before[data.records[r].item] = data.records[r].value;
  for (std::size_t r : user.set2) drift.after[data.records[r].item] = data.records[r].value;
  return drift;
}

}  // namespace igcf
