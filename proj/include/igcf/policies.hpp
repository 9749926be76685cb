#pragma once

// Episode-level policy adapters used by the replay harness. A policy sees one
// user at a time: begin_episode, then select/observe per round.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "igcf/baselines.hpp"
#include "igcf/online.hpp"

namespace igcf {

struct EpisodeStart {
  std::size_t user = 0;
  std::uint64_t seed = 0;
  // (item, theta) pairs known before round 1; warm-start users only.
  std::vector<std::pair<std::size_t, double>> history;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode(const EpisodeStart& start) = 0;
  // `candidates` are item ids not yet recommended to this user; `round` is 1-based.
  virtual std::vector<std::size_t> select(std::span<const std::size_t> candidates, std::size_t k,
                                          std::size_t round) = 0;
  virtual void observe(std::size_t item, double theta) = 0;
};

using ItemVectors = std::shared_ptr<const Eigen::MatrixXd>;

namespace detail {

inline Eigen::MatrixXd history_rows(const Eigen::MatrixXd& items, const EpisodeStart& start, Eigen::VectorXd& y) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(start.history.size()), items.rows());
  y.resize(x.rows());
  for (std::size_t r = 0; r < start.history.size(); ++r) {
    const auto [item, theta] = start.history[r];
    x.row(static_cast<Eigen::Index>(r)) = items.col(static_cast<Eigen::Index>(item)).transpose();
    y[static_cast<Eigen::Index>(r)] = theta;
  }
  return x;
}

}  // namespace detail

// Graph-pretrained item vectors, meta prior, Bayesian UCB. With use_meta off
// the prior is N(0, flat_variance I); exploration is controlled by the mode.
class IgcfPolicy : public Policy {
 public:
  IgcfPolicy(std::string name, ItemVectors items, MetaPrior meta, PolicyConfig config, bool use_meta = true,
             double flat_variance = 1.0)
      : name_(std::move(name)), items_(std::move(items)), meta_(std::move(meta)), config_(config) {
    config_.validate();
    if (!use_meta) {
      const auto d = items_->rows();
      meta_ = MetaPrior{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d), flat_variance};
    }
    if (meta_.mu_meta.size() != items_->rows()) throw ConfigError("meta prior and item vectors differ in dimension");
  }

  std::string name() const override { return name_; }

  void begin_episode(const EpisodeStart& start) override {
    rng_.seed(start.seed ^ config_.seed);
    Eigen::VectorXd y;
    const Eigen::MatrixXd x = detail::history_rows(*items_, start, y);
    state_ = init_user(meta_, x, y, config_.sigma_noise);
  }

  std::vector<std::size_t> select(std::span<const std::size_t> candidates, std::size_t k, std::size_t) override {
    return igcf::select(state_, candidates, *items_, config_, k, rng_);
  }

  void observe(std::size_t item, double theta) override {
    update_posterior(state_, items_->col(static_cast<Eigen::Index>(item)), theta, config_.sigma_noise);
  }

  const UserPosterior& state() const { return state_; }

 private:
  std::string name_;
  ItemVectors items_;
  MetaPrior meta_;
  PolicyConfig config_;
  UserPosterior state_;
  std::mt19937_64 rng_;
};

// Ridge-regression user refit over fixed item vectors. c = 0 in UCB mode is
// the greedy MF baseline.
class IcfPolicy : public Policy {
 public:
  IcfPolicy(std::string name, ItemVectors items, IcfMode mode, double c, double lambda, double sigma_noise,
            std::uint64_t seed = 0)
      : name_(std::move(name)), items_(std::move(items)), mode_(mode), c_(c), lambda_(lambda),
        sigma_noise_(sigma_noise), seed_(seed), state_(static_cast<int>(items_->rows()), lambda, sigma_noise) {
    if (!(c >= 0.0)) throw ConfigError("ICF exploration constant must be >= 0");
  }

  std::string name() const override { return name_; }

  void begin_episode(const EpisodeStart& start) override {
    rng_.seed(start.seed ^ seed_);
    state_ = IcfState(static_cast<int>(items_->rows()), lambda_, sigma_noise_);
    for (const auto& [item, theta] : start.history) observe(item, theta);
  }

  std::vector<std::size_t> select(std::span<const std::size_t> candidates, std::size_t k, std::size_t round) override {
    return icf_select(state_, candidates, *items_, mode_, c_, round, k, rng_);
  }

  void observe(std::size_t item, double theta) override {
    icf_update(state_, items_->col(static_cast<Eigen::Index>(item)), theta);
  }

 private:
  std::string name_;
  ItemVectors items_;
  IcfMode mode_;
  double c_;
  double lambda_;
  double sigma_noise_;
  std::uint64_t seed_;
  IcfState state_;
  std::mt19937_64 rng_;
};

class PopPolicy : public Policy {
 public:
  PopPolicy(std::string name, std::vector<std::size_t> counts) : name_(std::move(name)), counts_(std::move(counts)) {}

  std::string name() const override { return name_; }
  void begin_episode(const EpisodeStart&) override {}

  std::vector<std::size_t> select(std::span<const std::size_t> candidates, std::size_t k, std::size_t) override {
    Eigen::VectorXd scores(static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      scores[static_cast<Eigen::Index>(j)] =
          candidates[j] < counts_.size() ? static_cast<double>(counts_[candidates[j]]) : 0.0;
    }
    std::vector<std::size_t> slate;
    for (std::size_t pos : top_k(candidates, scores, k)) slate.push_back(candidates[pos]);
    return slate;
  }

  void observe(std::size_t, double) override {}

 private:
  std::string name_;
  std::vector<std::size_t> counts_;
};

class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(std::string name, std::uint64_t seed = 0) : name_(std::move(name)), seed_(seed) {}

  std::string name() const override { return name_; }
  void begin_episode(const EpisodeStart& start) override { rng_.seed(start.seed ^ seed_); }

  std::vector<std::size_t> select(std::span<const std::size_t> candidates, std::size_t k, std::size_t) override {
    if (k == 0 || candidates.size() < k) throw ConfigError("not enough candidates for a random slate");
    std::vector<std::size_t> pool(candidates.begin(), candidates.end());
    for (std::size_t j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
      std::swap(pool[j], pool[pick(rng_)]);
    }
    pool.resize(k);
    return pool;
  }

  void observe(std::size_t, double) override {}

 private:
  std::string name_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

}  // namespace igcf
