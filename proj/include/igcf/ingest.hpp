#pragma once

// Dataset readers. Every format is re-indexed densely in order of first
// appearance; the original ids stay on the dataset and can be written out as
// an id map.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "igcf/dataset.hpp"
#include "igcf/errors.hpp"

namespace igcf {

enum class DataFormat { kMovielensDat, kCsvTriplets, kKuairecCsv };

inline DataFormat parse_format(const std::string& s) {
  if (s == "movielens_dat") return DataFormat::kMovielensDat;
  if (s == "csv_triplets") return DataFormat::kCsvTriplets;
  if (s == "kuairec_csv") return DataFormat::kKuairecCsv;
  throw ConfigError("unknown dataset format '" + s + "' (movielens_dat, csv_triplets, kuairec_csv)");
}

inline std::string to_string(DataFormat f) {
  switch (f) {
    case DataFormat::kMovielensDat: return "movielens_dat";
    case DataFormat::kCsvTriplets: return "csv_triplets";
    case DataFormat::kKuairecCsv: return "kuairec_csv";
  }
  return "?";
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    out.push_back(trim(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + sep.size();
  }
  return out;
}

inline DataError line_error(std::size_t line, const std::string& what) {
  return DataError("line " + std::to_string(line) + ": " + what);
}

inline double parse_double(std::string_view s, std::size_t line, const char* field) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    throw line_error(line, std::string("bad ") + field + " '" + std::string(s) + "'");
  }
  return v;
}

inline std::int64_t parse_timestamp(std::string_view s, std::size_t line) {
  std::int64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (!s.empty() && ec == std::errc() && end == s.data() + s.size()) return v;
  return static_cast<std::int64_t>(std::floor(parse_double(s, line, "timestamp")));
}

class Indexer {
 public:
  std::size_t operator()(std::string_view id, std::vector<std::string>& names) {
    auto [it, fresh] = index_.try_emplace(std::string(id), names.size());
    if (fresh) names.emplace_back(id);
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace detail

// movielens_dat: "user::item::rating::timestamp". csv_triplets: header
// "user,item,value[,timestamp]". kuairec_csv: header naming user_id, video_id
// and watch_ratio (timestamp optional; blank or nan reads as 0).
inline InteractionDataset ingest(std::istream& in, DataFormat format) {
  InteractionDataset data;
  data.rule = format == DataFormat::kKuairecCsv ? SatisfactionRule::watch_ratio() : SatisfactionRule::ratings();
  detail::Indexer users, items;
  std::size_t col_user = 0, col_item = 1, col_value = 2, col_time = 3, need = 3;
  bool have_time = format == DataFormat::kMovielensDat;
  const std::string_view sep = format == DataFormat::kMovielensDat ? "::" : ",";

  std::string raw;
  std::size_t line = 0;
  bool header_done = format == DataFormat::kMovielensDat;
  while (std::getline(in, raw)) {
    ++line;
    const auto text = detail::trim(raw);
    if (text.empty()) continue;
    const auto fields = detail::split(text, sep);
    if (!header_done) {
      header_done = true;
      std::map<std::string_view, std::size_t> at;
      for (std::size_t j = 0; j < fields.size(); ++j) at.emplace(fields[j], j);
      auto column = [&](std::string_view name) {
        const auto it = at.find(name);
        if (it == at.end()) throw detail::line_error(line, "header lacks column '" + std::string(name) + "'");
        return it->second;
      };
      if (format == DataFormat::kCsvTriplets) {
        col_user = column("user"), col_item = column("item"), col_value = column("value");
        have_time = at.contains("timestamp");
      } else {
        col_user = column("user_id"), col_item = column("video_id"), col_value = column("watch_ratio");
        have_time = at.contains("timestamp");
      }
      if (have_time) col_time = at.at("timestamp");
      need = std::max({col_user, col_item, col_value, have_time ? col_time : 0}) + 1;
      continue;
    }
    if (format == DataFormat::kMovielensDat && fields.size() != 4) {
      throw detail::line_error(line, "expected user::item::rating::timestamp");
    }
    if (fields.size() < need) throw detail::line_error(line, "expected at least " + std::to_string(need) + " fields");
    if (fields[col_user].empty() || fields[col_item].empty()) throw detail::line_error(line, "empty id");
    Interaction r;
    r.user = users(fields[col_user], data.user_ids);
    r.item = items(fields[col_item], data.item_ids);
    r.value = detail::parse_double(fields[col_value], line, "value");
    if (have_time) {
      const auto t = fields[col_time];
      const bool blank = t.empty() || t == "nan" || t == "NaN";
      r.timestamp = blank && format == DataFormat::kKuairecCsv ? 0 : detail::parse_timestamp(t, line);
    }
    data.records.push_back(r);
  }
  if (line == 0 || (!header_done && data.records.empty())) throw DataError("empty dataset file");
  if (data.records.empty()) throw DataError("dataset file has no records");
  data.num_users = data.user_ids.size();
  data.num_items = data.item_ids.size();
  return data;
}

inline InteractionDataset ingest_file(const std::string& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  try {
    return ingest(in, format);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

// Genre lists per original item id. movielens_dat reads "id::title::A|B";
// the csv form is a header line then "id,<genres>" where the genre field may
// be quoted and bracketed ("[3, 7]") or '|'-separated. Items without an entry
// get an all-zero vector; entries for unknown ids are skipped.
inline void attach_genres(InteractionDataset& data, std::istream& in, DataFormat format) {
  if (data.item_ids.size() != data.num_items) throw DataError("genres need original item ids");
  std::unordered_map<std::string, std::size_t> item_index;
  for (std::size_t i = 0; i < data.item_ids.size(); ++i) item_index.emplace(data.item_ids[i], i);
  std::map<std::string, std::size_t> vocab;
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> rows;

  std::string raw;
  std::size_t line = 0;
  bool header_done = format == DataFormat::kMovielensDat;
  while (std::getline(in, raw)) {
    ++line;
    const auto text = detail::trim(raw);
    if (text.empty()) continue;
    if (!header_done) {
      header_done = true;
      continue;
    }
    std::string_view id, genres;
    if (format == DataFormat::kMovielensDat) {
      const auto f = detail::split(text, "::");
      if (f.size() != 3) throw detail::line_error(line, "expected id::title::genres");
      id = f[0], genres = f[2];
    } else {
      const auto comma = text.find(',');
      if (comma == std::string_view::npos) throw detail::line_error(line, "expected id,genres");
      id = detail::trim(text.substr(0, comma)), genres = text.substr(comma + 1);
    }
    const auto it = item_index.find(std::string(id));
    if (it == item_index.end()) continue;
    std::string cleaned(genres);
    for (char& c : cleaned)
      if (c == '"' || c == '[' || c == ']' || c == ',') c = '|';
    std::vector<std::size_t> tags;
    for (const auto g : detail::split(cleaned, "|")) {
      if (g.empty()) continue;
      tags.push_back(vocab.try_emplace(std::string(g), vocab.size()).first->second);
    }
    rows.emplace_back(it->second, std::move(tags));
  }
  if (vocab.empty()) throw DataError("genre file lists no genres");
  data.item_genres.assign(data.num_items, std::vector<double>(vocab.size(), 0.0));
  for (const auto& [item, tags] : rows)
    for (std::size_t g : tags) data.item_genres[item][g] = 1.0;
}

inline void attach_genres_file(InteractionDataset& data, const std::string& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open genre file '" + path + "'");
  attach_genres(data, in, format);
}

// "kind,index,id" rows for users then items.
inline void write_id_map(std::ostream& out, const InteractionDataset& data) {
  out << "kind,index,id\n";
  for (std::size_t u = 0; u < data.user_ids.size(); ++u) out << "user," << u << ',' << data.user_ids[u] << '\n';
  for (std::size_t i = 0; i < data.item_ids.size(); ++i) out << "item," << i << ',' << data.item_ids[i] << '\n';
}

struct IdMap {
  std::vector<std::string> users;
  std::vector<std::string> items;
};

inline IdMap read_id_map(std::istream& in) {
  IdMap map;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    if (++line == 1) continue;
    const auto f = detail::split(raw, ",");
    if (f.size() != 3) throw detail::line_error(line, "expected kind,index,id");
    auto& target = f[0] == "user" ? map.users : map.items;
    const auto index = static_cast<std::size_t>(detail::parse_double(f[1], line, "index"));
    if (index != target.size()) throw detail::line_error(line, "indices must be contiguous");
    target.emplace_back(f[2]);
  }
  return map;
}

}  // namespace igcf
