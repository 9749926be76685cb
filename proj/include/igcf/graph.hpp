#pragma once

// User-item bipartite graph, its symmetric normalization, and the linear
// graph-convolution operator Ebar = E * G for LightGCN, SGCN and APPNP.
//
// Embedding matrices are d x (M + N): one column per node, users first,
// then items. G is a polynomial in a symmetric sparse operator P, so it is
// symmetric and E * G is evaluated as K successive sparse products.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "igcf/dataset.hpp"
#include "igcf/errors.hpp"

namespace igcf {

using EmbeddingMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;

struct Edge {
  std::size_t user = 0;
  std::size_t item = 0;
  auto operator<=>(const Edge&) const = default;
};

class InteractionGraph {
 public:
  InteractionGraph() = default;

  // Edges are sorted and deduplicated; out-of-range endpoints are rejected.
  InteractionGraph(std::size_t num_users, std::size_t num_items, std::vector<Edge> edges)
      : num_users_(num_users), num_items_(num_items), edges_(std::move(edges)),
        degrees_(num_users + num_items, 0) {
    for (const Edge& e : edges_) {
      if (e.user >= num_users_ || e.item >= num_items_) {
        std::ostringstream msg;
        msg << "edge (" << e.user << ", " << e.item << ") outside [0," << num_users_
            << ")x[0," << num_items_ << ")";
        throw DataError(msg.str());
      }
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
    for (const Edge& e : edges_) {
      ++degrees_[e.user];
      ++degrees_[num_users_ + e.item];
    }
  }

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_nodes() const { return num_users_ + num_items_; }
  std::size_t item_node(std::size_t item) const { return num_users_ + item; }

  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::size_t>& degrees() const { return degrees_; }
  std::size_t degree(std::size_t node) const { return degrees_.at(node); }

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> degrees_;
};

inline InteractionGraph build_graph(const InteractionDataset& dataset) {
  std::vector<Edge> edges;
  edges.reserve(dataset.records.size());
  for (std::size_t r = 0; r < dataset.records.size(); ++r) {
    const Interaction& rec = dataset.records[r];
    if (rec.user >= dataset.num_users || rec.item >= dataset.num_items) {
      std::ostringstream msg;
      msg << "record " << r << " (user " << rec.user << ", item " << rec.item
          << ") outside dataset dimensions " << dataset.num_users << "x" << dataset.num_items;
      throw DataError(msg.str());
    }
    edges.push_back({rec.user, rec.item});
  }
  return InteractionGraph(dataset.num_users, dataset.num_items, std::move(edges));
}

// Both symmetric operators a propagation scheme may need. Compressed-row
// storage with sorted column indices fixes the iteration order.
struct NormalizedAdjacency {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  SparseMatrix tilde;      // D^{-1/2} A D^{-1/2}, isolated rows/columns zero
  SparseMatrix self_loop;  // (D+I)^{-1/2} (A+I) (D+I)^{-1/2}

  std::size_t num_nodes() const { return num_users + num_items; }
};

inline NormalizedAdjacency normalize_adjacency(const InteractionGraph& graph) {
  const auto n = static_cast<std::int64_t>(graph.num_nodes());
  const auto& deg = graph.degrees();
  std::vector<Eigen::Triplet<double, std::int64_t>> tilde;
  std::vector<Eigen::Triplet<double, std::int64_t>> looped;
  tilde.reserve(2 * graph.edges().size());
  looped.reserve(2 * graph.edges().size() + graph.num_nodes());
  for (const Edge& e : graph.edges()) {
    const auto u = static_cast<std::int64_t>(e.user);
    const auto i = static_cast<std::int64_t>(graph.item_node(e.item));
    const double du = static_cast<double>(deg[e.user]);
    const double di = static_cast<double>(deg[graph.item_node(e.item)]);
    const double w = 1.0 / std::sqrt(du * di);
    const double wl = 1.0 / std::sqrt((du + 1.0) * (di + 1.0));
    tilde.emplace_back(u, i, w);
    tilde.emplace_back(i, u, w);
    looped.emplace_back(u, i, wl);
    looped.emplace_back(i, u, wl);
  }
  for (std::int64_t j = 0; j < n; ++j) {
    looped.emplace_back(j, j, 1.0 / (static_cast<double>(deg[static_cast<std::size_t>(j)]) + 1.0));
  }
  NormalizedAdjacency adj;
  adj.num_users = graph.num_users();
  adj.num_items = graph.num_items();
  adj.tilde.resize(n, n);
  adj.tilde.setFromTriplets(tilde.begin(), tilde.end());
  adj.self_loop.resize(n, n);
  adj.self_loop.setFromTriplets(looped.begin(), looped.end());
  adj.tilde.makeCompressed();
  adj.self_loop.makeCompressed();
  return adj;
}

enum class Scheme { kLightGcn, kSgcn, kAppnp };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kLightGcn: return "lightgcn";
    case Scheme::kSgcn: return "sgcn";
    case Scheme::kAppnp: return "appnp";
  }
  return "unknown";
}

inline Scheme parse_scheme(const std::string& name) {
  if (name == "lightgcn") return Scheme::kLightGcn;
  if (name == "sgcn") return Scheme::kSgcn;
  if (name == "appnp") return Scheme::kAppnp;
  throw ConfigError("unknown propagation scheme '" + name + "'");
}

struct PropagationSpec {
  Scheme scheme = Scheme::kLightGcn;
  int depth = 3;
  std::vector<double> layer_weights;  // LightGCN alpha_0..alpha_K
  double teleport = 0.1;              // APPNP beta

  static PropagationSpec lightgcn(int depth) {
    PropagationSpec s;
    s.depth = depth;
    s.layer_weights.assign(static_cast<std::size_t>(depth + 1), 1.0 / (depth + 1));
    return s;
  }
  static PropagationSpec lightgcn(std::vector<double> weights) {
    PropagationSpec s;
    s.depth = static_cast<int>(weights.size()) - 1;
    s.layer_weights = std::move(weights);
    return s;
  }
  static PropagationSpec sgcn(int depth) {
    PropagationSpec s;
    s.scheme = Scheme::kSgcn;
    s.depth = depth;
    return s;
  }
  static PropagationSpec appnp(int depth, double teleport) {
    PropagationSpec s;
    s.scheme = Scheme::kAppnp;
    s.depth = depth;
    s.teleport = teleport;
    return s;
  }

  void validate() const {
    if (depth < 0) throw ConfigError("propagation depth must be >= 0");
    if (scheme == Scheme::kLightGcn) {
      if (layer_weights.size() != static_cast<std::size_t>(depth + 1)) {
        throw ConfigError("lightgcn needs depth+1 layer weights");
      }
      for (double a : layer_weights) {
        if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("layer weights must be finite and >= 0");
      }
    }
    if (scheme == Scheme::kAppnp && !(teleport > 0.0 && teleport <= 1.0)) {
      throw ConfigError("appnp teleport must lie in (0, 1]");
    }
  }

  // Coefficients c_k of G = sum_k c_k P^k, with P the scheme's operator.
  std::vector<double> coefficients() const {
    validate();
    std::vector<double> c(static_cast<std::size_t>(depth + 1), 0.0);
    switch (scheme) {
      case Scheme::kLightGcn:
        c = layer_weights;
        break;
      case Scheme::kSgcn:
        c.back() = 1.0;
        break;
      case Scheme::kAppnp: {
        double w = teleport;
        for (auto& ck : c) {
          ck = w;
          w *= (1.0 - teleport);
        }
        break;
      }
    }
    return c;
  }
};

inline const SparseMatrix& propagation_operator(const NormalizedAdjacency& adj, Scheme scheme) {
  return scheme == Scheme::kSgcn ? adj.self_loop : adj.tilde;
}

inline EmbeddingMatrix propagate(const EmbeddingMatrix& e0, const NormalizedAdjacency& adj,
                                 const PropagationSpec& spec) {
  if (static_cast<std::size_t>(e0.cols()) != adj.num_nodes()) {
    throw ConfigError("embedding matrix has " + std::to_string(e0.cols()) + " columns, graph has " +
                      std::to_string(adj.num_nodes()) + " nodes");
  }
  const auto coeffs = spec.coefficients();
  const SparseMatrix& op = propagation_operator(adj, spec.scheme);
  EmbeddingMatrix out = coeffs[0] * e0;
  EmbeddingMatrix layer = e0;
  for (std::size_t k = 1; k < coeffs.size(); ++k) {
    // P is symmetric, so E P == (P E^T)^T; the row-major product is the fast one.
    layer = (op * layer.transpose()).transpose();
    if (coeffs[k] != 0.0) out.noalias() += coeffs[k] * layer;
  }
  return out;
}

// Dense G for test oracles. Rebuilt from the sparsity pattern with dense
// arithmetic so that it shares no code path with propagate().
inline Eigen::MatrixXd materialize_g(const NormalizedAdjacency& adj, const PropagationSpec& spec,
                                     std::size_t max_nodes = 1000) {
  const std::size_t n = adj.num_nodes();
  if (n > max_nodes) {
    throw ConfigError("materialize_g: " + std::to_string(n) + " nodes exceeds cap " +
                      std::to_string(max_nodes));
  }
  const auto coeffs = spec.coefficients();
  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nn, nn);
  for (Eigen::Index r = 0; r < adj.tilde.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(adj.tilde, r); it; ++it) a(r, it.col()) = 1.0;
  }
  const Eigen::VectorXd deg = a.rowwise().sum();
  Eigen::MatrixXd op(nn, nn);
  if (spec.scheme == Scheme::kSgcn) {
    const Eigen::VectorXd inv = (deg.array() + 1.0).rsqrt().matrix();
    op = inv.asDiagonal() * (a + Eigen::MatrixXd::Identity(nn, nn)) * inv.asDiagonal();
  } else {
    Eigen::VectorXd inv(nn);
    for (Eigen::Index j = 0; j < nn; ++j) inv(j) = deg(j) > 0 ? 1.0 / std::sqrt(deg(j)) : 0.0;
    op = inv.asDiagonal() * a * inv.asDiagonal();
  }
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nn, nn);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(nn, nn);
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    if (k > 0) power = power * op;
    g += coeffs[k] * power;
  }
  return g;
}

// Column g_node of G, computed by K sparse matrix-vector products.
inline Eigen::VectorXd g_column(const NormalizedAdjacency& adj, const PropagationSpec& spec,
                                std::size_t node) {
  if (node >= adj.num_nodes()) throw ConfigError("node index " + std::to_string(node) + " out of range");
  const auto coeffs = spec.coefficients();
  const SparseMatrix& op = propagation_operator(adj, spec.scheme);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(adj.num_nodes()));
  v(static_cast<Eigen::Index>(node)) = 1.0;
  Eigen::VectorXd g = coeffs[0] * v;
  for (std::size_t k = 1; k < coeffs.size(); ++k) {
    v = op * v;
    g += coeffs[k] * v;
  }
  return g;
}

inline Eigen::VectorXd node_final_embedding(const EmbeddingMatrix& phi, const NormalizedAdjacency& adj,
                                            const PropagationSpec& spec, std::size_t node) {
  if (static_cast<std::size_t>(phi.cols()) != adj.num_nodes()) {
    throw ConfigError("embedding matrix does not match graph");
  }
  return phi * g_column(adj, spec, node);
}

// Evaluates final embeddings for a subset of nodes, and the adjoint of that
// map, touching only the K-hop neighborhood of the subset. Falls back to full
// propagation when the neighborhood covers most of the graph.
class BatchPropagator {
 public:
  BatchPropagator(const NormalizedAdjacency& adj, PropagationSpec spec, double dense_fraction = 0.5)
      : adj_(&adj), spec_(std::move(spec)), coeffs_(spec_.coefficients()),
        op_(&propagation_operator(adj, spec_.scheme)), dense_fraction_(dense_fraction),
        slot_(adj.num_nodes(), kNone) {}

  const PropagationSpec& spec() const { return spec_; }
  std::size_t num_users() const { return adj_->num_users; }
  std::size_t num_nodes() const { return adj_->num_nodes(); }
  bool last_was_local() const { return last_local_; }

  // Columns of E * G for `nodes` (sorted, unique), in that order.
  Eigen::MatrixXd gather(const EmbeddingMatrix& e, std::span<const std::size_t> nodes) {
    const auto d = e.rows();
    const auto m = static_cast<Eigen::Index>(nodes.size());
    build_balls(nodes);
    Eigen::MatrixXd out(d, m);
    if (!last_local_) {
      const EmbeddingMatrix full = propagate(e, *adj_, spec_);
      for (Eigen::Index j = 0; j < m; ++j) out.col(j) = full.col(static_cast<Eigen::Index>(nodes[j]));
      return out;
    }
    const std::size_t depth = coeffs_.size() - 1;
    const auto width = static_cast<Eigen::Index>(order_.size());
    // layer k lives on ball_{K-k}; columns indexed by position in order_.
    Eigen::MatrixXd prev(d, width), cur(d, width);
    for (Eigen::Index p = 0; p < width; ++p) prev.col(p) = e.col(static_cast<Eigen::Index>(order_[p]));
    out.setZero();
    accumulate_output(out, prev, nodes, coeffs_[0]);
    for (std::size_t k = 1; k <= depth; ++k) {
      const std::size_t live = ball_end_[depth - k];
      for (std::size_t p = 0; p < live; ++p) {
        auto col = cur.col(static_cast<Eigen::Index>(p));
        col.setZero();
        for (SparseMatrix::InnerIterator it(*op_, static_cast<Eigen::Index>(order_[p])); it; ++it) {
          col.noalias() += it.value() * prev.col(static_cast<Eigen::Index>(slot_[static_cast<std::size_t>(it.col())]));
        }
      }
      std::swap(prev, cur);
      accumulate_output(out, prev, nodes, coeffs_[k]);
    }
    return out;
  }

  // grad += H_full * G, where H_full is zero except columns `nodes` = upstream.
  void scatter(const Eigen::MatrixXd& upstream, std::span<const std::size_t> nodes, EmbeddingMatrix& grad) {
    build_balls(nodes);
    const auto d = upstream.rows();
    if (!last_local_) {
      EmbeddingMatrix h = EmbeddingMatrix::Zero(d, static_cast<Eigen::Index>(adj_->num_nodes()));
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        h.col(static_cast<Eigen::Index>(nodes[j])) = upstream.col(static_cast<Eigen::Index>(j));
      }
      grad += propagate(h, *adj_, spec_);
      return;
    }
    const std::size_t depth = coeffs_.size() - 1;
    const auto width = static_cast<Eigen::Index>(order_.size());
    Eigen::MatrixXd prev = Eigen::MatrixXd::Zero(d, width), cur(d, width);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      prev.col(static_cast<Eigen::Index>(slot_[nodes[j]])) = upstream.col(static_cast<Eigen::Index>(j));
    }
    add_to_grad(grad, prev, ball_end_[0], coeffs_[0]);
    for (std::size_t k = 1; k <= depth; ++k) {
      // Y_k = Y_{k-1} P, support grows from ball_{k-1} to ball_k.
      const std::size_t live = ball_end_[k];
      cur.leftCols(static_cast<Eigen::Index>(live)).setZero();
      for (std::size_t p = 0; p < ball_end_[k - 1]; ++p) {
        const auto src = prev.col(static_cast<Eigen::Index>(p));
        for (SparseMatrix::InnerIterator it(*op_, static_cast<Eigen::Index>(order_[p])); it; ++it) {
          cur.col(static_cast<Eigen::Index>(slot_[static_cast<std::size_t>(it.col())])).noalias() +=
              it.value() * src;
        }
      }
      std::swap(prev, cur);
      add_to_grad(grad, prev, live, coeffs_[k]);
    }
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  // order_ lists ball_0 (the nodes), then each successive shell; ball_end_[h]
  // is the size of ball_h. slot_ maps node -> position in order_.
  void build_balls(std::span<const std::size_t> nodes) {
    for (std::size_t node : order_) slot_[node] = kNone;
    order_.clear();
    ball_end_.clear();
    for (std::size_t node : nodes) {
      if (node >= adj_->num_nodes()) throw ConfigError("node index out of range");
      if (slot_[node] == kNone) {
        slot_[node] = order_.size();
        order_.push_back(node);
      }
    }
    ball_end_.push_back(order_.size());
    const std::size_t depth = coeffs_.size() - 1;
    const auto limit = static_cast<std::size_t>(dense_fraction_ * static_cast<double>(adj_->num_nodes()));
    std::size_t begin = 0;
    for (std::size_t h = 1; h <= depth; ++h) {
      const std::size_t end = order_.size();
      for (std::size_t p = begin; p < end; ++p) {
        for (SparseMatrix::InnerIterator it(*op_, static_cast<Eigen::Index>(order_[p])); it; ++it) {
          const auto nb = static_cast<std::size_t>(it.col());
          if (slot_[nb] == kNone) {
            slot_[nb] = order_.size();
            order_.push_back(nb);
          }
        }
      }
      begin = end;
      ball_end_.push_back(order_.size());
    }
    last_local_ = order_.size() <= limit || depth == 0;
  }

  void accumulate_output(Eigen::MatrixXd& out, const Eigen::MatrixXd& layer,
                         std::span<const std::size_t> nodes, double c) const {
    if (c == 0.0) return;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      out.col(static_cast<Eigen::Index>(j)).noalias() += c * layer.col(static_cast<Eigen::Index>(slot_[nodes[j]]));
    }
  }

  void add_to_grad(EmbeddingMatrix& grad, const Eigen::MatrixXd& layer, std::size_t live, double c) const {
    if (c == 0.0) return;
    for (std::size_t p = 0; p < live; ++p) {
      grad.col(static_cast<Eigen::Index>(order_[p])).noalias() += c * layer.col(static_cast<Eigen::Index>(p));
    }
  }

  const NormalizedAdjacency* adj_;
  PropagationSpec spec_;
  std::vector<double> coeffs_;
  const SparseMatrix* op_;
  double dense_fraction_;
  std::vector<std::size_t> slot_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> ball_end_;
  bool last_local_ = true;
};

}  // namespace igcf
