#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace igcf {

struct Interaction {
  std::size_t user = 0;
  std::size_t item = 0;
  double value = 0.0;
  std::int64_t timestamp = 0;
};

// How a raw record value turns into the satisfaction signal theta.
// Ratings: theta = 1 iff value >= threshold. Watch ratio: theta = value
// (optionally capped), satisfied iff value >= threshold.
struct SatisfactionRule {
  enum class Kind { kRating, kWatchRatio };

  Kind kind = Kind::kRating;
  double threshold = 4.0;
  std::optional<double> theta_cap;

  static SatisfactionRule ratings() { return {Kind::kRating, 4.0, std::nullopt}; }
  static SatisfactionRule watch_ratio() { return {Kind::kWatchRatio, 2.0, std::nullopt}; }

  bool satisfied(double value) const { return value >= threshold; }

  double theta(double value) const {
    if (kind == Kind::kRating) return satisfied(value) ? 1.0 : 0.0;
    return theta_cap ? std::min(value, *theta_cap) : value;
  }
};

struct InteractionDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Interaction> records;
  SatisfactionRule rule = SatisfactionRule::ratings();

  // Original ids by dense index; empty for synthetic data.
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;

  // Optional per-item genre indicator vectors (all the same length).
  std::vector<std::vector<double>> item_genres;

  bool has_genres() const { return !item_genres.empty(); }
};

}  // namespace igcf
