#pragma once

// Variational pretraining of per-node diagonal Gaussians q(e) = N(mu, diag(s)),
// s = softplus(rho), through the graph-convolution operator. One Monte Carlo
// sample per mini-batch; plain SGD on the negative ELBO.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igcf/errors.hpp"
#include "igcf/graph.hpp"

namespace igcf {

// Floored at the smallest normal double so the scale stays strictly positive
// even where exp underflows.
inline double softplus(double x) {
  const double v = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  return std::max(v, std::numeric_limits<double>::min());
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

struct VariationalParams {
  EmbeddingMatrix mu;
  EmbeddingMatrix rho;

  EmbeddingMatrix scale() const { return rho.unaryExpr([](double r) { return softplus(r); }); }
};

inline VariationalParams init_params(std::size_t num_users, std::size_t num_items, int dim) {
  if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
  const auto n = static_cast<Eigen::Index>(num_users + num_items);
  return {EmbeddingMatrix::Zero(dim, n), EmbeddingMatrix::Zero(dim, n)};
}

inline EmbeddingMatrix sample_embeddings(const VariationalParams& params, const EmbeddingMatrix& noise) {
  if (noise.rows() != params.mu.rows() || noise.cols() != params.mu.cols() ||
      params.rho.rows() != params.mu.rows() || params.rho.cols() != params.mu.cols()) {
    throw ConfigError("noise and variational parameters differ in shape");
  }
  return params.mu + params.scale().cwiseProduct(noise);
}

enum class FeedbackModel { kContinuous, kBinary };

inline std::string to_string(FeedbackModel f) { return f == FeedbackModel::kBinary ? "binary" : "continuous"; }

inline FeedbackModel parse_feedback(const std::string& s) {
  if (s == "continuous") return FeedbackModel::kContinuous;
  if (s == "binary") return FeedbackModel::kBinary;
  throw ConfigError("unknown feedback model '" + s + "'");
}

struct PretrainConfig {
  int dim = 32;
  double prior_variance = 1.0;  // sigma_0^2
  double noise_variance = 1.0;  // sigma_noise^2
  FeedbackModel feedback = FeedbackModel::kContinuous;
  double learning_rate = 0.01;
  std::size_t batch_size = 1024;
  int max_epochs = 500;
  double convergence_tol = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 1) throw ConfigError("pretrain dim must be >= 1");
    if (!(prior_variance > 0.0) || !(noise_variance > 0.0)) throw ConfigError("variances must be > 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  }
};

// One training pair: user index, item index (not node index), target.
struct Observation {
  std::size_t user = 0;
  std::size_t item = 0;
  double value = 0.0;
};

struct LossResult {
  double value = 0.0;
  double data_term = 0.0;
  double node_term = 0.0;
  EmbeddingMatrix grad_mu;
  EmbeddingMatrix grad_rho;
};

// Negative ELBO on one batch with frozen noise:
//   sum_batch data(r, ebar_u . ebar_i) + w * sum_nodes [e.e / (2 sigma_0^2) - 1/2 sum log s]
// with w = node_weight (|batch| / |S| during training). Gradients are taken
// with respect to (mu, rho) through e = mu + softplus(rho) * noise.
inline LossResult evaluate_loss(FeedbackModel model, const VariationalParams& params, const EmbeddingMatrix& noise,
                                std::span<const Observation> batch, BatchPropagator& propagator,
                                const PretrainConfig& config, double node_weight) {
  const EmbeddingMatrix scale = params.scale();
  const EmbeddingMatrix e = sample_embeddings(params, noise);
  const auto d = e.rows();
  if (static_cast<std::size_t>(e.cols()) != propagator.num_nodes()) {
    throw ConfigError("variational parameters do not match the graph");
  }

  LossResult out;
  out.grad_mu = EmbeddingMatrix::Zero(d, e.cols());

  if (!batch.empty()) {
    // Touched nodes: users keep their index, items are offset by M.
    std::vector<std::size_t> nodes;
    nodes.reserve(2 * batch.size());
    const std::size_t m = propagator.num_users();
    for (const auto& obs : batch) {
      nodes.push_back(obs.user);
      nodes.push_back(m + obs.item);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    auto slot = [&](std::size_t node) {
      return static_cast<Eigen::Index>(std::lower_bound(nodes.begin(), nodes.end(), node) - nodes.begin());
    };

    const Eigen::MatrixXd ebar = propagator.gather(e, nodes);
    Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(d, ebar.cols());
    const double inv_noise = 1.0 / config.noise_variance;
    for (const auto& obs : batch) {
      const Eigen::Index pu = slot(obs.user);
      const Eigen::Index pi = slot(m + obs.item);
      const double score = ebar.col(pu).dot(ebar.col(pi));
      double dscore = 0.0;
      if (model == FeedbackModel::kContinuous) {
        const double residual = obs.value - score;
        out.data_term += 0.5 * residual * residual * inv_noise;
        dscore = -residual * inv_noise;
      } else {
        if (obs.value != 0.0 && obs.value != 1.0) {
          throw DataError("binary feedback requires targets in {0,1}, got " + std::to_string(obs.value));
        }
        const double sign = 2.0 * obs.value - 1.0;
        const double z = sign * score;
        out.data_term += softplus(-z);  // -log sigmoid(z)
        dscore = -sign * sigmoid(-z);
      }
      upstream.col(pu).noalias() += dscore * ebar.col(pi);
      upstream.col(pi).noalias() += dscore * ebar.col(pu);
    }
    propagator.scatter(upstream, nodes, out.grad_mu);
  }

  const double inv_prior = 1.0 / config.prior_variance;
  const double prior = 0.5 * inv_prior * e.squaredNorm();
  const double entropy = 0.5 * scale.array().log().sum();
  out.node_term = node_weight * (prior - entropy);
  out.value = out.data_term + out.node_term;
  if (!std::isfinite(out.value)) {
    std::ostringstream msg;
    msg << "non-finite loss (data " << out.data_term << ", node " << out.node_term << ")";
    throw NumericalError(msg.str());
  }

  out.grad_mu.noalias() += (node_weight * inv_prior) * e;
  // d/d rho: dL/de * noise * softplus'(rho) - w/2 * softplus'(rho) / s
  const EmbeddingMatrix dsoft = params.rho.unaryExpr([](double r) { return sigmoid(r); });
  out.grad_rho = out.grad_mu.cwiseProduct(noise).cwiseProduct(dsoft) -
                 (0.5 * node_weight) * dsoft.cwiseQuotient(scale);
  return out;
}

inline LossResult loss_continuous(const VariationalParams& params, const EmbeddingMatrix& noise,
                                  std::span<const Observation> batch, BatchPropagator& propagator,
                                  const PretrainConfig& config, double node_weight = 1.0) {
  return evaluate_loss(FeedbackModel::kContinuous, params, noise, batch, propagator, config, node_weight);
}

inline LossResult loss_binary(const VariationalParams& params, const EmbeddingMatrix& noise,
                              std::span<const Observation> batch, BatchPropagator& propagator,
                              const PretrainConfig& config, double node_weight = 1.0) {
  return evaluate_loss(FeedbackModel::kBinary, params, noise, batch, propagator, config, node_weight);
}

inline EmbeddingMatrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  EmbeddingMatrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = z(rng);
  return m;
}

namespace detail {

inline void fnv1a(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

template <typename T>
void fnv1a_value(std::uint64_t& h, const T& v) {
  fnv1a(h, &v, sizeof(T));
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

}  // namespace detail

inline std::string dataset_fingerprint(std::span<const Observation> observations) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& o : observations) {
    detail::fnv1a_value(h, static_cast<std::uint64_t>(o.user));
    detail::fnv1a_value(h, static_cast<std::uint64_t>(o.item));
    detail::fnv1a_value(h, o.value);
  }
  return detail::hex64(h);
}

inline std::string config_hash(const PretrainConfig& c, const PropagationSpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  detail::fnv1a_value(h, c.dim);
  detail::fnv1a_value(h, c.prior_variance);
  detail::fnv1a_value(h, c.noise_variance);
  detail::fnv1a_value(h, static_cast<int>(c.feedback));
  detail::fnv1a_value(h, c.learning_rate);
  detail::fnv1a_value(h, static_cast<std::uint64_t>(c.batch_size));
  detail::fnv1a_value(h, c.max_epochs);
  detail::fnv1a_value(h, c.convergence_tol);
  detail::fnv1a_value(h, c.seed);
  detail::fnv1a_value(h, static_cast<int>(spec.scheme));
  detail::fnv1a_value(h, spec.depth);
  for (double w : spec.layer_weights) detail::fnv1a_value(h, w);
  detail::fnv1a_value(h, spec.teleport);
  return detail::hex64(h);
}

// Mini-batch SGD over shuffled observations, fresh noise per batch. The node
// (prior and entropy) terms are scaled by |batch| / |S| so one epoch sums to
// the full objective.
class VariationalTrainer {
 public:
  VariationalTrainer(std::vector<Observation> observations, const NormalizedAdjacency& adj, PropagationSpec spec,
                     PretrainConfig config, VariationalParams init)
      : observations_(std::move(observations)), propagator_(adj, std::move(spec)), config_(config),
        params_(std::move(init)), rng_(config.seed) {
    std::mt19937_64 eval_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    config_.validate();
    if (static_cast<std::size_t>(params_.mu.cols()) != adj.num_nodes() || params_.mu.rows() != config_.dim) {
      throw ConfigError("initial parameters do not match graph size or dim");
    }
    for (const auto& o : observations_) {
      if (o.user >= adj.num_users || o.item >= adj.num_items) {
        throw DataError("observation (" + std::to_string(o.user) + ", " + std::to_string(o.item) +
                        ") outside the graph");
      }
    }
    eval_noise_ = standard_normal(params_.mu.rows(), params_.mu.cols(), eval_rng);
  }

  // Full objective (all observations, node weight 1) under one noise draw
  // frozen at construction, so successive epochs are comparable.
  double objective() {
    try {
      return evaluate_loss(config_.feedback, params_, eval_noise_, observations_, propagator_, config_, 1.0).value;
    } catch (const NumericalError& e) {
      throw NumericalError("diverged after epoch " + std::to_string(epochs_) + " (full-batch check): " + e.what());
    }
  }

  double run_epoch() {
    std::shuffle(observations_.begin(), observations_.end(), rng_);
    const std::size_t total = observations_.size();
    const std::size_t batches = total == 0 ? 1 : (total + config_.batch_size - 1) / config_.batch_size;
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * config_.batch_size;
      const std::size_t end = std::min(total, begin + config_.batch_size);
      std::span<const Observation> batch(observations_.data() + begin, end - begin);
      const double weight = total == 0 ? 1.0 : static_cast<double>(batch.size()) / static_cast<double>(total);
      const EmbeddingMatrix noise = standard_normal(params_.mu.rows(), params_.mu.cols(), rng_);
      LossResult loss;
      try {
        loss = evaluate_loss(config_.feedback, params_, noise, batch, propagator_, config_, weight);
      } catch (const NumericalError& e) {
        throw NumericalError("diverged at epoch " + std::to_string(epochs_ + 1) + ", batch " +
                             std::to_string(b + 1) + ": " + e.what());
      }
      params_.mu.noalias() -= config_.learning_rate * loss.grad_mu;
      params_.rho.noalias() -= config_.learning_rate * loss.grad_rho;
      if (!params_.mu.allFinite() || !params_.rho.allFinite()) {
        throw NumericalError("diverged at epoch " + std::to_string(epochs_ + 1) + ", batch " +
                             std::to_string(b + 1) + ": non-finite parameters");
      }
      epoch_loss += loss.value;
    }
    ++epochs_;
    return epoch_loss;
  }

  const VariationalParams& params() const { return params_; }
  int epochs() const { return epochs_; }

 private:
  std::vector<Observation> observations_;
  BatchPropagator propagator_;
  PretrainConfig config_;
  VariationalParams params_;
  std::mt19937_64 rng_;
  EmbeddingMatrix eval_noise_;
  int epochs_ = 0;
};

struct PretrainedModel {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  PropagationSpec spec;
  VariationalParams params;     // mu is Phi*, softplus(rho) is s*
  EmbeddingMatrix user_vectors;  // d x M, Phi* g_u
  EmbeddingMatrix item_vectors;  // d x N, e*_i = Phi* g_i
  std::vector<double> epoch_losses;
  bool converged = false;
  std::string provenance;

  const EmbeddingMatrix& phi_star() const { return params.mu; }
  EmbeddingMatrix scale_star() const { return params.scale(); }
  int dim() const { return static_cast<int>(params.mu.rows()); }
};

inline EmbeddingMatrix export_item_vectors(const PretrainedModel& model, const NormalizedAdjacency& adj) {
  const EmbeddingMatrix final = propagate(model.phi_star(), adj, model.spec);
  return final.rightCols(static_cast<Eigen::Index>(model.num_items));
}

// Fills user/item final vectors from the current mean matrix.
inline void refresh_final_vectors(PretrainedModel& model, const NormalizedAdjacency& adj) {
  const EmbeddingMatrix final = propagate(model.phi_star(), adj, model.spec);
  model.user_vectors = final.leftCols(static_cast<Eigen::Index>(model.num_users));
  model.item_vectors = final.rightCols(static_cast<Eigen::Index>(model.num_items));
}

inline NormalizedAdjacency adjacency_from_observations(std::span<const Observation> observations,
                                                       std::size_t num_users, std::size_t num_items) {
  std::vector<Edge> edges;
  edges.reserve(observations.size());
  for (const auto& o : observations) edges.push_back({o.user, o.item});
  return normalize_adjacency(InteractionGraph(num_users, num_items, std::move(edges)));
}

inline PretrainedModel pretrain(std::span<const Observation> observations, const NormalizedAdjacency& adj,
                                const PropagationSpec& spec, const PretrainConfig& config) {
  config.validate();
  spec.validate();
  VariationalTrainer trainer({observations.begin(), observations.end()}, adj, spec, config,
                             init_params(adj.num_users, adj.num_items, config.dim));
  PretrainedModel model;
  model.num_users = adj.num_users;
  model.num_items = adj.num_items;
  model.spec = spec;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    trainer.run_epoch();
    const double loss = trainer.objective();
    model.epoch_losses.push_back(loss);
    if (model.epoch_losses.size() >= 2) {
      const double prev = model.epoch_losses[model.epoch_losses.size() - 2];
      const double rel = std::abs(prev - loss) / std::max(std::abs(prev), 1e-300);
      if (rel < config.convergence_tol) {
        model.converged = true;
        break;
      }
    }
  }
  model.params = trainer.params();
  model.provenance = "config:" + config_hash(config, spec) + " data:" + dataset_fingerprint(observations);
  refresh_final_vectors(model, adj);
  return model;
}

inline PretrainedModel pretrain(std::span<const Observation> observations, std::size_t num_users,
                                std::size_t num_items, const PropagationSpec& spec, const PretrainConfig& config) {
  const auto adj = adjacency_from_observations(observations, num_users, num_items);
  return pretrain(observations, adj, spec, config);
}

}  // namespace igcf
