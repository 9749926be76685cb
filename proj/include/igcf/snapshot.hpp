#pragma once

// Binary embedding snapshot:
//   "IGCF" | u32 version | u64 M | u64 N | u64 d | u64 K | u32 scheme
//   | mu as (M+N) x d row-major f64 | rho, same layout
// All integers and floats little-endian. Layer weights and teleport are not
// stored; they come from the run configuration.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>

#include "igcf/errors.hpp"
#include "igcf/graph.hpp"
#include "igcf/pretrain.hpp"

namespace igcf {

inline constexpr std::uint32_t kSnapshotVersion = 1;

struct Snapshot {
  std::uint64_t num_users = 0;
  std::uint64_t num_items = 0;
  std::uint64_t dim = 0;
  std::uint64_t depth = 0;
  Scheme scheme = Scheme::kLightGcn;
  VariationalParams params;
};

inline Snapshot make_snapshot(const PretrainedModel& model) {
  return {model.num_users, model.num_items, static_cast<std::uint64_t>(model.dim()),
          static_cast<std::uint64_t>(model.spec.depth), model.spec.scheme, model.params};
}

namespace detail {

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

template <typename T>
void write_le(std::ostream& out, T v) {
  v = byteswap_if_big(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("snapshot truncated reading " + what);
  return byteswap_if_big(v);
}

inline std::uint32_t scheme_tag(Scheme s) { return static_cast<std::uint32_t>(s); }

inline Scheme scheme_from_tag(std::uint32_t tag) {
  switch (tag) {
    case 0: return Scheme::kLightGcn;
    case 1: return Scheme::kSgcn;
    case 2: return Scheme::kAppnp;
  }
  throw DataError("snapshot has unknown scheme tag " + std::to_string(tag));
}

}  // namespace detail

inline void write_snapshot(std::ostream& out, const Snapshot& snap) {
  const auto n = static_cast<Eigen::Index>(snap.num_users + snap.num_items);
  const auto d = static_cast<Eigen::Index>(snap.dim);
  if (snap.params.mu.rows() != d || snap.params.mu.cols() != n || snap.params.rho.rows() != d ||
      snap.params.rho.cols() != n) {
    throw ConfigError("snapshot header does not match parameter shapes");
  }
  out.write("IGCF", 4);
  detail::write_le(out, kSnapshotVersion);
  detail::write_le(out, snap.num_users);
  detail::write_le(out, snap.num_items);
  detail::write_le(out, snap.dim);
  detail::write_le(out, snap.depth);
  detail::write_le(out, detail::scheme_tag(snap.scheme));
  // Column-major d x n storage is exactly row-major n x d.
  for (const auto* m : {&snap.params.mu, &snap.params.rho})
    for (Eigen::Index j = 0; j < m->size(); ++j) detail::write_le(out, m->data()[j]);
  if (!out) throw DataError("failed writing snapshot");
}

inline Snapshot read_snapshot(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "IGCF", 4) != 0) throw DataError("not an IGCF snapshot (bad magic)");
  const auto version = detail::read_le<std::uint32_t>(in, "version");
  if (version != kSnapshotVersion) throw DataError("unsupported snapshot version " + std::to_string(version));
  Snapshot snap;
  snap.num_users = detail::read_le<std::uint64_t>(in, "M");
  snap.num_items = detail::read_le<std::uint64_t>(in, "N");
  snap.dim = detail::read_le<std::uint64_t>(in, "d");
  snap.depth = detail::read_le<std::uint64_t>(in, "K");
  snap.scheme = detail::scheme_from_tag(detail::read_le<std::uint32_t>(in, "scheme"));
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 40;
  if (snap.dim == 0 || snap.num_users > kLimit || snap.num_items > kLimit || snap.dim > 1u << 20) {
    throw DataError("snapshot header has implausible sizes");
  }
  const auto n = static_cast<Eigen::Index>(snap.num_users + snap.num_items);
  const auto d = static_cast<Eigen::Index>(snap.dim);
  snap.params.mu.resize(d, n);
  snap.params.rho.resize(d, n);
  for (auto* m : {&snap.params.mu, &snap.params.rho})
    for (Eigen::Index j = 0; j < m->size(); ++j) m->data()[j] = detail::read_le<double>(in, "parameters");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after snapshot payload");
  return snap;
}

inline void save_snapshot(const std::filesystem::path& path, const Snapshot& snap) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_snapshot(out, snap);
}

inline Snapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open snapshot " + path.string());
  return read_snapshot(in);
}

// One line per (node, field): node,kind,index,field,v0..v{d-1}.
inline void write_snapshot_csv(std::ostream& out, const Snapshot& snap) {
  out << "node,kind,index,field";
  for (std::uint64_t k = 0; k < snap.dim; ++k) out << ",v" << k;
  out << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto n = snap.num_users + snap.num_items;
  for (const char* field : {"mu", "rho"}) {
    const auto& m = std::strcmp(field, "mu") == 0 ? snap.params.mu : snap.params.rho;
    for (std::uint64_t node = 0; node < n; ++node) {
      const bool user = node < snap.num_users;
      out << node << ',' << (user ? "user" : "item") << ',' << (user ? node : node - snap.num_users) << ','
          << field;
      for (Eigen::Index k = 0; k < m.rows(); ++k) out << ',' << m(k, static_cast<Eigen::Index>(node));
      out << '\n';
    }
  }
}

// Rebuilds a model around a snapshot and the graph it was trained on. The
// layer weights / teleport come from `spec`; its scheme and depth must agree.
inline PretrainedModel model_from_snapshot(const Snapshot& snap, const NormalizedAdjacency& adj,
                                           const PropagationSpec& spec) {
  if (snap.num_users != adj.num_users || snap.num_items != adj.num_items) {
    throw DataError("snapshot size (" + std::to_string(snap.num_users) + " users, " +
                    std::to_string(snap.num_items) + " items) does not match the dataset graph");
  }
  if (spec.scheme != snap.scheme || static_cast<std::uint64_t>(spec.depth) != snap.depth) {
    throw ConfigError("propagation spec disagrees with snapshot (scheme " + to_string(snap.scheme) + ", K=" +
                      std::to_string(snap.depth) + ")");
  }
  PretrainedModel model;
  model.num_users = adj.num_users;
  model.num_items = adj.num_items;
  model.spec = spec;
  model.params = snap.params;
  model.converged = true;
  model.provenance = "snapshot";
  refresh_final_vectors(model, adj);
  return model;
}

}  // namespace igcf
