#pragma once

// Synthetic Gaussian linear bandit: tasks theta ~ N(mu*, Sigma*), items from
// a norm-truncated Gaussian, rewards theta'e + N(0, sigma^2). Empirical
// Bayesian regret curves plus the analytic constants they are compared with.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <json.hpp>

#include "igcf/errors.hpp"
#include "igcf/online.hpp"

namespace igcf {

struct SyntheticEnvConfig {
  int dim = 4;
  std::size_t num_items = 50;
  double sigma_noise = 0.5;
  double item_bound = 1.0;       // a: every item has norm <= a
  Eigen::MatrixXd item_cov;      // Sigma_A
  Eigen::VectorXd prior_mean;    // mu*
  Eigen::MatrixXd prior_cov;     // Sigma*

  void validate() const {
    const auto d = static_cast<Eigen::Index>(dim);
    if (dim < 1 || num_items == 0) throw ConfigError("synthetic env needs d >= 1 and N >= 1");
    if (!(sigma_noise > 0.0) || !(item_bound > 0.0)) throw ConfigError("sigma_noise and item bound must be > 0");
    if (item_cov.rows() != d || item_cov.cols() != d || prior_cov.rows() != d || prior_cov.cols() != d ||
        prior_mean.size() != d) {
      throw ConfigError("synthetic env matrices must match d = " + std::to_string(dim));
    }
  }
};

// Scalar description of an environment: Sigma_A = item_scale^2 I, mu* a random
// direction of norm mean_norm, Sigma* = Q diag(lambda_low .. lambda_bar) Q'.
struct LabSpec {
  int dim = 4;
  std::size_t num_items = 50;
  double sigma_noise = 0.5;
  double item_bound = 1.0;
  double item_scale = 0.5;
  double mean_norm = 1.0;
  double lambda_low = 0.25;
  double lambda_bar = 1.0;
};

inline SyntheticEnvConfig make_lab_config(const LabSpec& spec, std::uint64_t seed) {
  if (spec.dim < 1) throw ConfigError("lab dimension must be >= 1");
  if (!(spec.lambda_low > 0.0) || spec.lambda_low > spec.lambda_bar) {
    throw ConfigError("need 0 < lambda_low <= lambda_bar");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const auto d = static_cast<Eigen::Index>(spec.dim);
  Eigen::MatrixXd g(d, d);
  for (Eigen::Index j = 0; j < g.size(); ++j) g.data()[j] = z(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Eigen::VectorXd eig(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    eig[k] = d == 1 ? spec.lambda_bar
                    : spec.lambda_low + (spec.lambda_bar - spec.lambda_low) * static_cast<double>(k) /
                                            static_cast<double>(d - 1);
  }
  Eigen::VectorXd dir(d);
  for (Eigen::Index k = 0; k < d; ++k) dir[k] = z(rng);
  SyntheticEnvConfig cfg;
  cfg.dim = spec.dim;
  cfg.num_items = spec.num_items;
  cfg.sigma_noise = spec.sigma_noise;
  cfg.item_bound = spec.item_bound;
  cfg.item_cov = spec.item_scale * spec.item_scale * Eigen::MatrixXd::Identity(d, d);
  cfg.prior_mean = spec.mean_norm * dir.normalized();
  cfg.prior_cov = q * eig.asDiagonal() * q.transpose();
  cfg.prior_cov = 0.5 * (cfg.prior_cov + cfg.prior_cov.transpose());
  return cfg;
}

struct SyntheticEnv {
  SyntheticEnvConfig config;
  Eigen::MatrixXd items;  // d x N
  double acceptance_rate = 1.0;

  double lambda_sigma_a() const {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(config.item_cov, Eigen::EigenvaluesOnly)
        .eigenvalues()
        .minCoeff();
  }
  double lambda_bar() const {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(config.prior_cov, Eigen::EigenvaluesOnly)
        .eigenvalues()
        .maxCoeff();
  }
  double prior_mean_norm() const { return config.prior_mean.norm(); }
};

struct TruncatedSample {
  Eigen::MatrixXd draws;  // d x count
  double acceptance_rate = 1.0;
};

// Rejection sampling from N(0, cov) restricted to ||x|| <= bound. Gives up
// with a config error once the observed acceptance rate falls below 0.1%.
inline TruncatedSample sample_truncated_gaussian(const Eigen::MatrixXd& cov, double bound, std::size_t count,
                                                 std::mt19937_64& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw ConfigError("item covariance is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  const auto d = cov.rows();
  std::normal_distribution<double> z;
  TruncatedSample out;
  out.draws.resize(d, static_cast<Eigen::Index>(count));
  std::size_t accepted = 0, tried = 0;
  Eigen::VectorXd g(d);
  while (accepted < count) {
    for (Eigen::Index k = 0; k < d; ++k) g[k] = z(rng);
    const Eigen::VectorXd x = l * g;
    ++tried;
    if (x.norm() <= bound) out.draws.col(static_cast<Eigen::Index>(accepted++)) = x;
    if (tried >= 10000 && static_cast<double>(accepted) < 0.001 * static_cast<double>(tried)) {
      throw ConfigError("item rejection rate above 99.9%; raise the norm bound a or shrink Sigma_A");
    }
  }
  out.acceptance_rate = count == 0 ? 1.0 : static_cast<double>(accepted) / static_cast<double>(tried);
  return out;
}

inline SyntheticEnv sample_env(const SyntheticEnvConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto sample = sample_truncated_gaussian(config.item_cov, config.item_bound, config.num_items, rng);
  return {config, std::move(sample.draws), sample.acceptance_rate};
}

// Task parameters theta ~ N(mu*, Sigma*), one per column; the data a meta
// prior is estimated from.
inline Eigen::MatrixXd sample_tasks(const SyntheticEnvConfig& config, std::size_t count, std::uint64_t seed) {
  config.validate();
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(config.prior_cov).matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd tasks(config.dim, static_cast<Eigen::Index>(count));
  for (Eigen::Index c = 0; c < tasks.cols(); ++c) {
    Eigen::VectorXd draw(config.dim);
    for (int k = 0; k < config.dim; ++k) draw[k] = z(rng);
    tasks.col(c) = config.prior_mean + l * draw;
  }
  return tasks;
}

// First t (1-based) with lambda_min(sum_{s<=t} e_s e_s') >= lambda_sigma_a * d / 2;
// nullopt when never reached.
inline std::optional<std::size_t> sufficient_rounds(const Eigen::MatrixXd& chosen, double lambda_sigma_a, int d) {
  const double threshold = lambda_sigma_a * d / 2.0;
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(chosen.rows(), chosen.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  for (Eigen::Index t = 0; t < chosen.cols(); ++t) {
    v.noalias() += chosen.col(t) * chosen.col(t).transpose();
    if (t + 1 < chosen.rows()) continue;  // rank deficient before d picks
    eig.compute(v, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() >= threshold) return static_cast<std::size_t>(t + 1);
  }
  return std::nullopt;
}

struct Lemma1Constants {
  double gamma = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double threshold = 0.0;  // 5d + 2 ln(dMT/3)
  bool feasible = false;   // M >= threshold
};

inline Lemma1Constants lemma1_constants(double m, double d, double t, double lambda_bar) {
  if (m < 1 || d < 1 || t < 1) throw ConfigError("lemma constants need M, d, T >= 1");
  Lemma1Constants c;
  c.threshold = 5 * d + 2 * std::log(d * m * t / 3);
  c.gamma = 32 * lambda_bar * std::sqrt(c.threshold / m);
  c.c1 = lambda_bar * (2 * d + 3 * std::log(d * m * t));
  c.c2 = (64 * lambda_bar) * (64 * lambda_bar) * c.threshold;
  c.feasible = m >= c.threshold;
  return c;
}

struct Theorem2Params {
  double rounds = 1000;  // T
  double tau = 20;       // infinity allowed
  double dim = 4;
  double num_items = 50;
  double num_tasks = 100;  // M
  double lambda_bar = 1;
  double sigma_noise = 1;
  double item_bound = 1;  // a
  double mean_bound = 1;  // m
  double k1 = 0;
  double delta = 0.01;
};

struct Theorem2Terms {
  double gamma = 0.0;
  double b = 0.0;
  double k2 = 0.0;
  double c_bad = 0.0;
  double bound = 0.0;
};

inline Theorem2Terms theorem2_terms(const Theorem2Params& p) {
  Theorem2Terms out;
  const double s2 = p.sigma_noise * p.sigma_noise;
  out.gamma = 4 * std::sqrt(p.lambda_bar / std::log1p(p.lambda_bar / s2) * std::log(4 * p.num_items * p.rounds));
  out.b = p.item_bound * (p.mean_bound + std::sqrt(p.lambda_bar * p.dim));
  out.k2 = 2 * out.b;
  out.c_bad = 22 * p.item_bound *
              (p.mean_bound + std::sqrt(4 * p.lambda_bar * std::log(p.dim * p.dim * p.num_tasks * p.rounds)));
  const double growth = std::sqrt(0.5 * p.rounds * p.dim * std::log1p(p.lambda_bar * p.rounds / s2));
  out.bound = (1 + p.k1) * (out.gamma * growth + out.b) + out.c_bad * p.delta / std::sqrt(p.dim) + out.k2 * p.tau;
  return out;
}

inline double theorem2_bound(const Theorem2Params& p) { return theorem2_terms(p).bound; }

// One agent plays one task at a time; the true theta is passed to reset so
// the oracle can use it, everyone else ignores it.
class LabAgent {
 public:
  virtual ~LabAgent() = default;
  virtual void reset(const Eigen::VectorXd& theta, std::uint64_t seed) = 0;
  virtual std::size_t choose(const Eigen::MatrixXd& items) = 0;
  virtual void observe(const Eigen::Ref<const Eigen::VectorXd>& e, double reward) = 0;
};

namespace detail {

// argmax with ties to the lowest index.
inline std::size_t argmax_low(const Eigen::VectorXd& scores) {
  std::size_t best = 0;
  for (Eigen::Index j = 1; j < scores.size(); ++j)
    if (scores[j] > scores[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(j);
  return best;
}

}  // namespace detail

class OracleAgent : public LabAgent {
 public:
  void reset(const Eigen::VectorXd& theta, std::uint64_t) override { theta_ = theta; }
  std::size_t choose(const Eigen::MatrixXd& items) override {
    return detail::argmax_low(items.transpose() * theta_);
  }
  void observe(const Eigen::Ref<const Eigen::VectorXd>&, double) override {}

 private:
  Eigen::VectorXd theta_;
};

class UniformAgent : public LabAgent {
 public:
  void reset(const Eigen::VectorXd&, std::uint64_t seed) override { rng_.seed(seed); }
  std::size_t choose(const Eigen::MatrixXd& items) override {
    return std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(items.cols()) - 1)(rng_);
  }
  void observe(const Eigen::Ref<const Eigen::VectorXd>&, double) override {}

 private:
  std::mt19937_64 rng_;
};

// Gaussian prior + conjugate updates; UCB / LinUCB / greedy / Thompson per
// the policy mode.
class BayesAgent : public LabAgent {
 public:
  BayesAgent(Eigen::VectorXd prior_mean, Eigen::MatrixXd prior_cov, PolicyConfig policy)
      : prior_mean_(std::move(prior_mean)), prior_cov_(std::move(prior_cov)), policy_(policy) {
    policy_.validate();
  }

  void reset(const Eigen::VectorXd&, std::uint64_t seed) override {
    rng_.seed(seed ^ policy_.seed);
    state_ = UserPosterior::from_moments(prior_mean_, prior_cov_);
  }

  std::size_t choose(const Eigen::MatrixXd& items) override {
    if (policy_.mode == SelectionMode::kThompson) return detail::argmax_low(items.transpose() * state_.sample(rng_));
    return detail::argmax_low(ucb_scores(state_, items, policy_));
  }

  void observe(const Eigen::Ref<const Eigen::VectorXd>& e, double reward) override {
    state_.observe(e, reward, policy_.sigma_noise);
  }

 private:
  Eigen::VectorXd prior_mean_;
  Eigen::MatrixXd prior_cov_;
  PolicyConfig policy_;
  UserPosterior state_;
  std::mt19937_64 rng_;
};

struct RegretCurve {
  std::vector<double> inst;  // mean instantaneous regret per round
  std::vector<double> cum;   // mean cumulative regret per round
  std::vector<std::vector<double>> per_rep_inst;
  std::vector<std::optional<std::size_t>> tau;  // per replication
  std::vector<std::uint64_t> seeds;
  std::size_t reps = 0;

  double cumulative_at(std::size_t t) const { return cum.at(t - 1); }
};

// Replication r draws theta and reward noise from streams keyed by (seed, r)
// only, so different agents face identical tasks and noise.
inline RegretCurve empirical_regret(const SyntheticEnv& env, LabAgent& agent, std::size_t rounds, std::size_t reps,
                                    std::uint64_t seed) {
  if (reps == 0) throw ConfigError("regret needs at least one replication");
  const auto& cfg = env.config;
  const Eigen::MatrixXd prior_l = Eigen::LLT<Eigen::MatrixXd>(cfg.prior_cov).matrixL();
  const double lambda_a = env.lambda_sigma_a();

  RegretCurve curve;
  curve.reps = reps;
  curve.inst.assign(rounds, 0.0);
  curve.cum.assign(rounds, 0.0);
  Eigen::MatrixXd chosen(cfg.dim, static_cast<Eigen::Index>(rounds));
  for (std::size_t r = 0; r < reps; ++r) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(r)};
    std::mt19937_64 task_rng(seq);
    std::normal_distribution<double> z;
    Eigen::VectorXd g(cfg.dim);
    for (Eigen::Index k = 0; k < g.size(); ++k) g[k] = z(task_rng);
    const Eigen::VectorXd theta = cfg.prior_mean + prior_l * g;
    const Eigen::VectorXd means = env.items.transpose() * theta;
    const double best = means.maxCoeff();
    std::mt19937_64 noise_rng(task_rng());
    const std::uint64_t agent_seed = task_rng();
    curve.seeds.push_back(agent_seed);
    agent.reset(theta, agent_seed);

    std::vector<double> inst(rounds);
    for (std::size_t t = 0; t < rounds; ++t) {
      const std::size_t pick = agent.choose(env.items);
      const auto e = env.items.col(static_cast<Eigen::Index>(pick));
      const double noise = cfg.sigma_noise * z(noise_rng);
      agent.observe(e, means[static_cast<Eigen::Index>(pick)] + noise);
      inst[t] = best - means[static_cast<Eigen::Index>(pick)];
      chosen.col(static_cast<Eigen::Index>(t)) = e;
    }
    curve.tau.push_back(sufficient_rounds(chosen, lambda_a, cfg.dim));
    double running = 0.0;
    for (std::size_t t = 0; t < rounds; ++t) {
      running += inst[t];
      curve.inst[t] += inst[t];
      curve.cum[t] += running;
    }
    curve.per_rep_inst.push_back(std::move(inst));
  }
  for (std::size_t t = 0; t < rounds; ++t) {
    curve.inst[t] /= static_cast<double>(reps);
    curve.cum[t] /= static_cast<double>(reps);
  }
  return curve;
}

// rep,t,inst_regret,cum_regret with t 1-based.
inline void write_regret_csv(std::ostream& out, const RegretCurve& curve) {
  out << "rep,t,inst_regret,cum_regret\n";
  out.precision(17);
  for (std::size_t r = 0; r < curve.per_rep_inst.size(); ++r) {
    double running = 0.0;
    const auto& inst = curve.per_rep_inst[r];
    for (std::size_t t = 0; t < inst.size(); ++t) {
      running += inst[t];
      out << r << ',' << (t + 1) << ',' << inst[t] << ',' << running << '\n';
    }
  }
}

inline nlohmann::json regret_summary(const RegretCurve& curve, const std::vector<std::size_t>& checkpoints,
                                     const Theorem2Params& bound_params) {
  nlohmann::json j;
  j["reps"] = curve.reps;
  std::size_t reached = 0;
  double tau_sum = 0.0;
  for (const auto& t : curve.tau) {
    if (t) {
      ++reached;
      tau_sum += static_cast<double>(*t);
    }
  }
  j["tau_reached_fraction"] = curve.tau.empty() ? 0.0 : static_cast<double>(reached) / curve.tau.size();
  j["tau_mean_when_reached"] = reached ? nlohmann::json(tau_sum / reached) : nlohmann::json(nullptr);
  for (std::size_t t : checkpoints) {
    if (t == 0 || t > curve.cum.size()) continue;
    Theorem2Params p = bound_params;
    p.rounds = static_cast<double>(t);
    const auto terms = theorem2_terms(p);
    nlohmann::json row;
    row["T"] = t;
    row["cum_regret"] = curve.cum[t - 1];
    row["cum_regret_per_round"] = curve.cum[t - 1] / static_cast<double>(t);
    row["bound"] = std::isfinite(terms.bound) ? nlohmann::json(terms.bound) : nlohmann::json("inf");
    j["checkpoints"].push_back(row);
  }
  return j;
}

}  // namespace igcf
