#pragma once

// Run artifacts: per-slot interaction CSV, JSON metric summaries and a
// manifest with the config echo and content hashes of every input.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "igcf/errors.hpp"
#include "igcf/eval.hpp"
#include "igcf/experiment.hpp"

namespace igcf {

// Shortest round-trip decimal form, locale independent.
inline std::string format_double(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline void write_episode_csv_header(std::ostream& out) {
  out << "experiment,policy,user,round,slot,item,theta,reward\n";
}

inline void write_episode_csv(std::ostream& out, const std::string& experiment, const std::string& policy,
                              std::span<const EpisodeLog> logs) {
  for (const auto& log : logs) {
    for (std::size_t t = 0; t < log.rounds.size(); ++t) {
      const auto& r = log.rounds[t];
      for (std::size_t j = 0; j < r.slate.size(); ++j) {
        out << experiment << ',' << policy << ',' << log.user << ',' << t + 1 << ',' << j + 1 << ',' << r.slate[j]
            << ',' << format_double(r.theta[j]) << ',' << format_double(r.reward[j]) << '\n';
      }
    }
  }
}

struct PolicyResult {
  std::string policy;
  std::vector<Checkpoint> checkpoints;
};

inline nlohmann::ordered_json summary_json(const std::string& experiment, std::uint64_t seed, std::size_t k,
                                           std::span<const PolicyResult> results) {
  nlohmann::ordered_json j;
  j["experiment"] = experiment;
  j["seed"] = seed;
  j["slate"] = k;
  auto& policies = j["policies"] = nlohmann::ordered_json::object();
  for (const auto& r : results) {
    auto& p = policies[r.policy] = nlohmann::ordered_json::object();
    for (const auto& c : r.checkpoints) {
      const auto t = std::to_string(c.t);
      p["precision@" + t] = c.precision;
      p["recall@" + t] = c.recall;
      p["ndcg_" + std::to_string(k) + "@" + t] = c.ndcg;
    }
  }
  return j;
}

// Hash git assigns to a blob with these contents: SHA-1 over
// "blob <size>\0" followed by the bytes.
inline std::string git_blob_sha1(const std::string& bytes) {
  const std::string framed = "blob " + std::to_string(bytes.size()) + '\0' + bytes;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(framed.data(), framed.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw DataError("SHA-1 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::ordered_json config_json(const boost::property_tree::ptree& tree) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [section, keys] : tree) {
    auto& s = j[section] = nlohmann::ordered_json::object();
    for (const auto& [key, value] : keys) s[key] = value.data();
  }
  return j;
}

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  boost::property_tree::ptree config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string status = "complete";
  std::string error;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["seed"] = seed;
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    j["config"] = config_json(config);
    auto& in = j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& path : inputs) {
      const auto bytes = read_bytes(path);
      in.push_back({{"path", path}, {"bytes", bytes.size()}, {"git_sha1", git_blob_sha1(bytes)}});
    }
    j["outputs"] = outputs;
    return j;
  }
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace igcf
