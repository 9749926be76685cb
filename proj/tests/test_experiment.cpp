#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "igcf/config.hpp"
#include "igcf/experiment.hpp"

namespace igcf {
namespace {

TEST(Surrogate, DeterministicAndWellFormed) {
  const SurrogateSpec spec;
  const auto a = make_surrogate(spec, 3);
  const auto b = make_surrogate(spec, 3);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t r = 0; r < a.records.size(); ++r) {
    EXPECT_EQ(a.records[r].item, b.records[r].item);
    EXPECT_EQ(a.records[r].value, b.records[r].value);
  }
  std::vector<std::size_t> per_user(spec.num_users, 0);
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& r : a.records) {
    ++per_user[r.user];
    EXPECT_TRUE(r.value >= 1 && r.value <= 5 && r.value == std::round(r.value));
    EXPECT_TRUE(pairs.insert({r.user, r.item}).second);
  }
  for (std::size_t n : per_user) {
    EXPECT_GE(n, spec.min_activity);
    EXPECT_LE(n, spec.max_activity);
  }
  EXPECT_EQ(a.item_genres.size(), spec.num_items);
}

TEST(Subsample, KeepsFractionAndCatalog) {
  const auto data = make_surrogate({}, 1);
  const auto sub = subsample_users(data, 0.2, 9);
  EXPECT_EQ(sub.num_users, 40u);
  EXPECT_EQ(sub.num_items, data.num_items);
  std::set<std::size_t> users;
  for (const auto& r : sub.records) users.insert(r.user);
  EXPECT_EQ(users.size(), 40u);
  EXPECT_EQ(*users.rbegin(), 39u);
  EXPECT_THROW(subsample_users(data, 0.0, 1), ConfigError);
}

TEST(Split, TestUsersNeverTrain) {
  const auto data = make_surrogate({}, 2);
  ProtocolSpec p;
  const auto split = make_split(data, p, 5);
  const auto active = most_active_users(data, p.test_users);
  ASSERT_EQ(split.starts.size(), active.size());
  std::set<std::size_t> test(active.begin(), active.end());
  for (const auto& s : split.starts) EXPECT_TRUE(test.contains(s.user));
  for (const auto& o : split.train) EXPECT_FALSE(test.contains(o.user));
  std::size_t eligible = 0;
  for (const auto& r : data.records) eligible += !test.contains(r.user);
  const double n = static_cast<double>(eligible);
  EXPECT_NEAR(static_cast<double>(split.train.size()), 0.5 * n, 4.0 * std::sqrt(0.25 * n));
  for (const auto& [user, count] : split.satisfied) EXPECT_GT(count, 0u);
}

TEST(Split, SignalChoosesTrainingTarget) {
  const auto data = make_surrogate({}, 2);
  ProtocolSpec p;
  p.signal = LearningSignal::kTheta;
  for (const auto& o : make_split(data, p, 5).train) EXPECT_TRUE(o.value == 0.0 || o.value == 1.0);
  p.signal = LearningSignal::kReward;
  bool raw = false;
  for (const auto& o : make_split(data, p, 5).train) raw = raw || o.value > 1.0;
  EXPECT_TRUE(raw);
}

TEST(Split, DriftSeedsHistory) {
  SurrogateSpec spec;
  spec.drift_fraction = 0.2;
  const auto data = make_surrogate(spec, 4);
  ProtocolSpec p;
  p.protocol = Protocol::kDrift;
  p.rounds = 80;
  p.test_users = 10;
  const auto split = make_split(data, p, 1);
  ASSERT_EQ(split.starts.size(), 10u);
  for (const auto& s : split.starts) {
    EXPECT_FALSE(s.history.empty());
    EXPECT_TRUE(split.env.has_drift(s.user));
  }
  p.switch_round = 80;
  EXPECT_THROW(make_split(data, p, 1), ConfigError);
}

TEST(PolicyFactory, UnknownAndMissingModels) {
  FittedModels none;
  ModelSpec spec;
  EXPECT_THROW(make_policy("nope", none, spec), ConfigError);
  EXPECT_THROW(make_policy("igcf", none, spec), ConfigError);
  EXPECT_THROW(make_policy("mf", none, spec), ConfigError);
  EXPECT_NO_THROW(make_policy("pop", none, spec));
}

ModelSpec default_model() { return parse_config(default_config_tree()).model; }

TEST(Replay, IgcfTriplesRandomOnPlantedCorpus) {
  const auto data = make_surrogate({}, 1);
  ProtocolSpec p;
  p.signal = LearningSignal::kReward;
  const auto split = make_split(data, p, 1);
  auto spec = default_model();
  const auto fitted = fit_models(split, spec, {"igcf", "random"});
  auto igcf = make_policy("igcf", fitted, spec);
  auto random = make_policy("random", fitted, spec);
  const double a = precision_at(run_policy(split, *igcf, 40, 1, p.signal), 40);
  const double b = precision_at(run_policy(split, *random, 40, 1, p.signal), 40);
  EXPECT_GE(a, 3.0 * b) << a << " vs " << b;
}

TEST(Replay, MfBeatsRandomOnRankTwoCorpus) {
  SurrogateSpec s;
  s.dim = 2;
  s.num_genres = 4;
  s.taste_tilt = 4.0;
  const auto data = make_surrogate(s, 2);
  ProtocolSpec p;
  p.signal = LearningSignal::kReward;
  const auto split = make_split(data, p, 2);
  auto spec = default_model();
  spec.pretrain.max_epochs = 100;
  const auto fitted = fit_models(split, spec, {"mf", "random"});
  auto mf = make_policy("mf", fitted, spec);
  auto random = make_policy("random", fitted, spec);
  const double a = precision_at(run_policy(split, *mf, 20, 1, p.signal), 20);
  const double b = precision_at(run_policy(split, *random, 20, 1, p.signal), 20);
  EXPECT_GT(a, b) << a << " vs " << b;
}

TEST(Replay, RerunIsIdentical) {
  const auto data = make_surrogate({}, 6);
  ProtocolSpec p;
  p.rounds = 10;
  p.slate = 3;
  const auto split = make_split(data, p, 6);
  auto spec = default_model();
  spec.pretrain.max_epochs = 20;
  const auto fitted = fit_models(split, spec, {"igcf-ts", "icf_ts"});
  for (const char* name : {"igcf-ts", "icf_ts"}) {
    auto x = make_policy(name, fitted, spec);
    auto y = make_policy(name, fitted, spec);
    const auto lx = run_policy(split, *x, 10, 3);
    const auto ly = run_policy(split, *y, 10, 3);
    for (std::size_t u = 0; u < lx.size(); ++u)
      for (std::size_t t = 0; t < 10; ++t) EXPECT_EQ(lx[u].rounds[t].slate, ly[u].rounds[t].slate);
  }
}

}  // namespace
}  // namespace igcf
