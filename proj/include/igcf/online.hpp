#pragma once

// Online phase: meta prior over new users, conjugate Gaussian updates of a
// single user's vector against fixed item vectors, and slate selection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "igcf/errors.hpp"
#include "igcf/pretrain.hpp"

namespace igcf {

struct MetaPrior {
  Eigen::VectorXd mu_meta;
  Eigen::MatrixXd sigma_meta;
  double gamma = 0.1;

  int dim() const { return static_cast<int>(mu_meta.size()); }
  Eigen::MatrixXd prior_covariance() const {
    return sigma_meta + gamma * Eigen::MatrixXd::Identity(sigma_meta.rows(), sigma_meta.cols());
  }
};

// Columns of `user_vectors` are the users' final mean vectors Phi* g_u.
inline MetaPrior build_meta_prior(const Eigen::MatrixXd& user_vectors, double gamma) {
  if (user_vectors.cols() < 2) throw ConfigError("meta prior needs at least two users");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  MetaPrior meta;
  meta.gamma = gamma;
  meta.mu_meta = user_vectors.rowwise().mean();
  const Eigen::MatrixXd centered = user_vectors.colwise() - meta.mu_meta;
  meta.sigma_meta = centered * centered.transpose() / static_cast<double>(user_vectors.cols() - 1);
  meta.sigma_meta = 0.5 * (meta.sigma_meta + meta.sigma_meta.transpose());
  return meta;
}

inline MetaPrior build_meta_prior(const PretrainedModel& model, double gamma) {
  return build_meta_prior(model.user_vectors, gamma);
}

// Posterior N(mu, precision^{-1}) kept in information form: precision and
// precision * mu, with the Cholesky factor refreshed on every change.
class UserPosterior {
 public:
  UserPosterior() = default;

  UserPosterior(Eigen::MatrixXd precision, Eigen::VectorXd information)
      : precision_(std::move(precision)), information_(std::move(information)) {
    if (precision_.rows() != precision_.cols() || precision_.rows() != information_.size()) {
      throw ConfigError("posterior precision and information vector disagree in dimension");
    }
    refresh();
  }

  static UserPosterior from_moments(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariance);
    if (llt.info() != Eigen::Success) throw NumericalError("prior covariance is not positive definite");
    const Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(mean.size(), mean.size()));
    return UserPosterior(0.5 * (precision + precision.transpose()), precision * mean);
  }

  int dim() const { return static_cast<int>(mu_.size()); }
  const Eigen::VectorXd& mean() const { return mu_; }
  const Eigen::MatrixXd& precision() const { return precision_; }
  const Eigen::LLT<Eigen::MatrixXd>& chol() const { return chol_; }
  std::size_t round() const { return round_; }

  Eigen::MatrixXd covariance() const { return chol_.solve(Eigen::MatrixXd::Identity(dim(), dim())); }

  // e' Sigma e as ||L^{-1} e||^2.
  double variance(const Eigen::Ref<const Eigen::VectorXd>& e) const {
    return chol_.matrixL().solve(e).squaredNorm();
  }

  // Per-column variances for a d x n block of item vectors.
  Eigen::VectorXd variances(const Eigen::MatrixXd& items) const {
    return chol_.matrixL().solve(items).colwise().squaredNorm().transpose();
  }

  // Sample from N(mu, Sigma): mu + L^{-T} z.
  Eigen::VectorXd sample(std::mt19937_64& rng) const {
    std::normal_distribution<double> z;
    Eigen::VectorXd draw(dim());
    for (Eigen::Index k = 0; k < draw.size(); ++k) draw[k] = z(rng);
    return mu_ + chol_.matrixU().solve(draw);
  }

  void observe(const Eigen::Ref<const Eigen::VectorXd>& e, double reward, double sigma_noise) {
    if (!std::isfinite(reward)) throw DataError("non-finite reward");
    if (e.size() != dim()) throw ConfigError("item vector dimension differs from posterior");
    const double inv = 1.0 / (sigma_noise * sigma_noise);
    precision_.noalias() += inv * e * e.transpose();
    information_.noalias() += (inv * reward) * e;
    ++round_;
    refresh();
  }

 private:
  void refresh() {
    chol_.compute(precision_);
    if (chol_.info() != Eigen::Success) throw NumericalError("posterior precision lost positive definiteness");
    mu_ = chol_.solve(information_);
  }

  Eigen::MatrixXd precision_;
  Eigen::VectorXd information_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd mu_;
  std::size_t round_ = 0;
};

// Prior from the meta distribution, then the user's recorded history folded
// in at once. Rows of x0 are item vectors.
inline UserPosterior init_user(const MetaPrior& meta, const Eigen::MatrixXd& x0, const Eigen::VectorXd& y0,
                               double sigma_noise) {
  const auto d = meta.mu_meta.size();
  if (x0.rows() != y0.size() || (x0.rows() > 0 && x0.cols() != d)) {
    throw ConfigError("history shape does not match the meta prior");
  }
  if (!y0.allFinite()) throw DataError("non-finite reward in user history");
  Eigen::LLT<Eigen::MatrixXd> llt(meta.prior_covariance());
  if (llt.info() != Eigen::Success) throw NumericalError("Sigma_meta + gamma I is singular; raise gamma");
  Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
  precision = 0.5 * (precision + precision.transpose());
  Eigen::VectorXd information = precision * meta.mu_meta;
  if (x0.rows() > 0) {
    const double inv = 1.0 / (sigma_noise * sigma_noise);
    precision.noalias() += inv * x0.transpose() * x0;
    information.noalias() += inv * x0.transpose() * y0;
  }
  return UserPosterior(std::move(precision), std::move(information));
}

inline UserPosterior init_user(const MetaPrior& meta, double sigma_noise) {
  return init_user(meta, Eigen::MatrixXd(0, meta.mu_meta.size()), Eigen::VectorXd(0), sigma_noise);
}

inline void update_posterior(UserPosterior& state, const Eigen::Ref<const Eigen::VectorXd>& e, double reward,
                             double sigma_noise) {
  state.observe(e, reward, sigma_noise);
}

inline double mutual_information_from_variance(double variance, double sigma_noise) {
  return 0.5 * std::log1p(variance / (sigma_noise * sigma_noise));
}

inline double mutual_information(const UserPosterior& state, const Eigen::Ref<const Eigen::VectorXd>& e,
                                 double sigma_noise) {
  return mutual_information_from_variance(state.variance(e), sigma_noise);
}

// lambda / log(1 + lambda / sigma^2), continuous at lambda = 0 (value sigma^2).
inline double variance_ratio(double lambda, double sigma_noise) {
  const double s2 = sigma_noise * sigma_noise;
  const double x = lambda / s2;
  if (x < 1e-8) return s2 * (1.0 + 0.5 * x);
  return lambda / std::log1p(x);
}

inline double gamma_from_lambda(double lambda, std::size_t num_candidates, double delta, double sigma_noise) {
  if (num_candidates == 0) throw ConfigError("empty candidate set");
  return 4.0 * std::sqrt(variance_ratio(lambda, sigma_noise) *
                         std::log(2.0 * static_cast<double>(num_candidates) / delta));
}

inline double gamma_t(const UserPosterior& state, const Eigen::MatrixXd& candidates, double delta,
                      double sigma_noise) {
  if (candidates.cols() == 0) throw ConfigError("empty candidate set");
  return gamma_from_lambda(state.variances(candidates).maxCoeff(), static_cast<std::size_t>(candidates.cols()), delta,
                           sigma_noise);
}

enum class SelectionMode { kUcbTheorem1, kLinUcbNu, kThompson, kGreedy };

inline std::string to_string(SelectionMode m) {
  switch (m) {
    case SelectionMode::kUcbTheorem1: return "ucb_theorem1";
    case SelectionMode::kLinUcbNu: return "linucb_nu";
    case SelectionMode::kThompson: return "thompson";
    case SelectionMode::kGreedy: return "greedy";
  }
  return "?";
}

inline SelectionMode parse_selection_mode(const std::string& s) {
  if (s == "ucb_theorem1") return SelectionMode::kUcbTheorem1;
  if (s == "linucb_nu") return SelectionMode::kLinUcbNu;
  if (s == "thompson") return SelectionMode::kThompson;
  if (s == "greedy") return SelectionMode::kGreedy;
  throw ConfigError("unknown selection mode '" + s + "'");
}

struct PolicyConfig {
  SelectionMode mode = SelectionMode::kUcbTheorem1;
  double delta = 0.05;
  double nu = 1.0;
  double sigma_noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (!(nu >= 0.0)) throw ConfigError("nu must be >= 0");
    if (!(sigma_noise > 0.0)) throw ConfigError("sigma_noise must be > 0");
  }
};

// Scores for every column of `candidates` under a deterministic mode.
inline Eigen::VectorXd ucb_scores(const UserPosterior& state, const Eigen::MatrixXd& candidates,
                                  const PolicyConfig& policy) {
  Eigen::VectorXd scores = candidates.transpose() * state.mean();
  if (policy.mode == SelectionMode::kGreedy || candidates.cols() == 0) return scores;
  const Eigen::VectorXd var = state.variances(candidates);
  if (policy.mode == SelectionMode::kLinUcbNu) return scores + policy.nu * var.cwiseSqrt();
  if (policy.mode == SelectionMode::kUcbTheorem1) {
    const double half_gamma =
        0.5 * gamma_from_lambda(var.maxCoeff(), var.size(), policy.delta, policy.sigma_noise);
    for (Eigen::Index j = 0; j < scores.size(); ++j)
      scores[j] += half_gamma * std::sqrt(mutual_information_from_variance(var[j], policy.sigma_noise));
    return scores;
  }
  throw ConfigError("thompson mode has no deterministic score");
}

inline double ucb_score(const UserPosterior& state, const Eigen::VectorXd& e, const PolicyConfig& policy,
                        const Eigen::MatrixXd& candidates) {
  const double mean = state.mean().dot(e);
  switch (policy.mode) {
    case SelectionMode::kGreedy: return mean;
    case SelectionMode::kLinUcbNu: return mean + policy.nu * std::sqrt(state.variance(e));
    case SelectionMode::kUcbTheorem1:
      return mean + 0.5 * gamma_t(state, candidates, policy.delta, policy.sigma_noise) *
                        std::sqrt(mutual_information(state, e, policy.sigma_noise));
    case SelectionMode::kThompson: break;
  }
  throw ConfigError("thompson mode has no deterministic score");
}

// Indices into `ids` of the k best scores: descending score, ties by
// ascending id.
inline std::vector<std::size_t> top_k(std::span<const std::size_t> ids, const Eigen::VectorXd& scores,
                                      std::size_t k) {
  if (k == 0) throw ConfigError("slate size must be >= 1");
  if (ids.size() < k) {
    throw ConfigError("only " + std::to_string(ids.size()) + " candidates for a slate of " + std::to_string(k));
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = scores[static_cast<Eigen::Index>(a)];
    const double sb = scores[static_cast<Eigen::Index>(b)];
    if (sa != sb) return sa > sb;
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  return order;
}

inline Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& items, std::span<const std::size_t> ids) {
  Eigen::MatrixXd out(items.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] >= static_cast<std::size_t>(items.cols())) {
      throw DataError("candidate item " + std::to_string(ids[j]) + " outside the catalog");
    }
    out.col(static_cast<Eigen::Index>(j)) = items.col(static_cast<Eigen::Index>(ids[j]));
  }
  return out;
}

// Returns item ids (drawn from `ids`) of the chosen slate, best first.
// `items` holds the full catalog, one column per item id.
inline std::vector<std::size_t> select(const UserPosterior& state, std::span<const std::size_t> ids,
                                       const Eigen::MatrixXd& items, const PolicyConfig& policy, std::size_t k,
                                       std::mt19937_64& rng) {
  const Eigen::MatrixXd cand = gather_columns(items, ids);
  Eigen::VectorXd scores;
  if (policy.mode == SelectionMode::kThompson) {
    scores = cand.transpose() * state.sample(rng);
  } else {
    scores = ucb_scores(state, cand, policy);
  }
  std::vector<std::size_t> slate;
  for (std::size_t pos : top_k(ids, scores, k)) slate.push_back(ids[pos]);
  return slate;
}

}  // namespace igcf
