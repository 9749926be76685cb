#pragma once

// Reference policies' building blocks: ridge-regression ICF user state with
// UCB or Thompson selection, and popularity ranking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "igcf/dataset.hpp"
#include "igcf/errors.hpp"
#include "igcf/online.hpp"

namespace igcf {

// mu = (sum e e' + lambda I)^{-1} sum e r, cov = (sum e e' + lambda I)^{-1} sigma^2.
class IcfState {
 public:
  IcfState(int dim, double lambda, double sigma_noise)
      : gram_(lambda * Eigen::MatrixXd::Identity(dim, dim)), moment_(Eigen::VectorXd::Zero(dim)), lambda_(lambda),
        sigma_noise_(sigma_noise) {
    if (dim < 1) throw ConfigError("ICF dimension must be >= 1");
    if (!(lambda > 0.0)) throw ConfigError("ICF ridge lambda must be > 0");
    if (!(sigma_noise > 0.0)) throw ConfigError("sigma_noise must be > 0");
    refresh();
  }

  int dim() const { return static_cast<int>(moment_.size()); }
  double lambda() const { return lambda_; }
  double sigma_noise() const { return sigma_noise_; }
  std::size_t count() const { return count_; }
  const Eigen::VectorXd& mu() const { return mu_; }

  Eigen::MatrixXd cov() const {
    return chol_.solve(Eigen::MatrixXd::Identity(dim(), dim())) * (sigma_noise_ * sigma_noise_);
  }

  Eigen::VectorXd variances(const Eigen::MatrixXd& items) const {
    return chol_.matrixL().solve(items).colwise().squaredNorm().transpose() * (sigma_noise_ * sigma_noise_);
  }

  Eigen::VectorXd sample(std::mt19937_64& rng) const {
    std::normal_distribution<double> z;
    Eigen::VectorXd draw(dim());
    for (Eigen::Index k = 0; k < draw.size(); ++k) draw[k] = z(rng);
    return mu_ + sigma_noise_ * chol_.matrixU().solve(draw);
  }

  void update(const Eigen::Ref<const Eigen::VectorXd>& e, double reward) {
    if (!std::isfinite(reward)) throw DataError("non-finite reward");
    gram_.noalias() += e * e.transpose();
    moment_.noalias() += reward * e;
    ++count_;
    refresh();
  }

 private:
  void refresh() {
    chol_.compute(gram_);
    if (chol_.info() != Eigen::Success) throw NumericalError("ICF Gram matrix lost positive definiteness");
    mu_ = chol_.solve(moment_);
  }

  Eigen::MatrixXd gram_;
  Eigen::VectorXd moment_;
  double lambda_;
  double sigma_noise_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd mu_;
  std::size_t count_ = 0;
};

inline void icf_update(IcfState& state, const Eigen::Ref<const Eigen::VectorXd>& e, double reward) {
  state.update(e, reward);
}

enum class IcfMode { kUcb, kThompson };

inline IcfMode parse_icf_mode(const std::string& s) {
  if (s == "ucb") return IcfMode::kUcb;
  if (s == "ts" || s == "thompson") return IcfMode::kThompson;
  throw ConfigError("unknown ICF mode '" + s + "'");
}

// Slate for round t (1-based): UCB scores mu'e + c sqrt(log t) ||e||_Sigma,
// or a single posterior draw ranked by theta'e.
inline std::vector<std::size_t> icf_select(const IcfState& state, std::span<const std::size_t> ids,
                                           const Eigen::MatrixXd& items, IcfMode mode, double c, std::size_t round,
                                           std::size_t k, std::mt19937_64& rng) {
  if (ids.empty()) throw ConfigError("empty candidate set");
  if (round < 1) throw ConfigError("ICF rounds are 1-based");
  const Eigen::MatrixXd cand = gather_columns(items, ids);
  Eigen::VectorXd scores;
  if (mode == IcfMode::kThompson) {
    scores = cand.transpose() * state.sample(rng);
  } else {
    scores = cand.transpose() * state.mu();
    const double bonus = c * std::sqrt(std::log(static_cast<double>(round)));
    if (bonus != 0.0) scores += bonus * state.variances(cand).cwiseSqrt();
  }
  std::vector<std::size_t> slate;
  for (std::size_t pos : top_k(ids, scores, k)) slate.push_back(ids[pos]);
  return slate;
}

// Items by number of satisfied interactions, descending; ties by ascending id.
inline std::vector<std::size_t> popularity_counts(const InteractionDataset& data) {
  std::vector<std::size_t> counts(data.num_items, 0);
  for (const auto& r : data.records) {
    if (r.item >= data.num_items) throw DataError("record item " + std::to_string(r.item) + " outside catalog");
    if (data.rule.satisfied(r.value)) ++counts[r.item];
  }
  return counts;
}

inline std::vector<std::size_t> popularity_order(std::span<const std::size_t> counts) {
  std::vector<std::size_t> order(counts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  return order;
}

}  // namespace igcf
