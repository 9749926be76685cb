#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "igcf/report.hpp"

namespace igcf {
namespace {

TEST(GitBlobSha1, KnownHashes) {
  EXPECT_EQ(git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(FormatDouble, RoundTrips) {
  for (double v : {0.0, 1.0, 0.1, 1.0 / 3.0, 2.5e-300, -7.25, 9.227721794581683}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(3.0), "3");
}

std::vector<EpisodeLog> two_users() {
  return {{4, {{{7, 1}, {1.0, 0.0}, {5.0, 0.0}}, {{3, 2}, {0.0, 1.0}, {2.0, 4.0}}}},
          {1, {{{0, 9}, {0.0, 0.0}, {0.0, 0.0}}, {{5, 6}, {1.0, 1.0}, {4.0, 4.5}}}}};
}

TEST(EpisodeCsv, OneRowPerSlot) {
  std::ostringstream out;
  write_episode_csv_header(out);
  write_episode_csv(out, "cold", "pop", two_users());
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "experiment,policy,user,round,slot,item,theta,reward");
  std::getline(in, line);
  EXPECT_EQ(line, "cold,pop,4,1,1,7,1,5");
  int rows = 1;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 8);
  EXPECT_EQ(last, "cold,pop,1,2,2,6,1,4.5");
}

TEST(Summary, KeysAndDeterminism) {
  const auto logs = two_users();
  ReplaySplit split;
  split.satisfied = {{4, 2}, {1, 4}};
  const std::vector<std::size_t> ts{1, 2};
  const std::vector<PolicyResult> results{{"pop", checkpoints(logs, split, ts, 2)}};
  const auto a = summary_json("cold", 3, 2, results).dump(2);
  const auto b = summary_json("cold", 3, 2, results).dump(2);
  EXPECT_EQ(a, b);
  const auto j = nlohmann::json::parse(a);
  EXPECT_DOUBLE_EQ(j["policies"]["pop"]["precision@2"].get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(j["policies"]["pop"]["recall@2"].get<double>(), (2.0 / 2 + 2.0 / 4) / 2);
  EXPECT_TRUE(j["policies"]["pop"].contains("ndcg_2@1"));
}

TEST(Manifest, EchoesConfigAndHashesInputs) {
  const auto path = (std::filesystem::temp_directory_path() / "igcf_manifest_input.txt").string();
  write_text(path, "hello\n");
  Manifest m;
  m.command = "evaluate";
  m.seed = 5;
  m.config.put("run.seed", "5");
  m.inputs = {path};
  m.outputs = {"summary.json"};
  const auto j = m.to_json();
  EXPECT_EQ(j["config"]["run"]["seed"], "5");
  EXPECT_EQ(j["inputs"][0]["git_sha1"], "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(j["status"], "complete");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace igcf
