#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(IGCF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("igcf_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

constexpr const char* kSmall = " --set pretrain.max_epochs=5 --set synthetic.users=60 --set synthetic.items=120"
                               " --set protocol.test_users=10 --T 20 --set protocol.checkpoints=10,20";

TEST_F(Cli, EvaluateWithoutModelIsConfigError) {
  EXPECT_EQ(run("evaluate --out " + at("e")), 2);
  EXPECT_EQ(run("evaluate --pretrain --set nope.key=1"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(Cli, MalformedDataIsDataError) {
  std::ofstream(at("bad.csv")) << "user,item,value\n1,2,x\n";
  EXPECT_EQ(run("evaluate --pretrain --out " + at("b") + " --set data.path=" + at("bad.csv")), 3);
  EXPECT_NE(slurp(dir_ / "b" / "manifest.json").find("\"partial\""), std::string::npos);
}

TEST_F(Cli, DivergenceIsNumericalError) {
  EXPECT_EQ(run(std::string("pretrain --out ") + at("n") + kSmall + " --set pretrain.learning_rate=1e6"), 4);
}

TEST_F(Cli, PretrainThenEvaluateIsDeterministic) {
  ASSERT_EQ(run(std::string("pretrain --out ") + at("p") + kSmall), 0);
  ASSERT_TRUE(fs::exists(dir_ / "p" / "snapshot.igcf"));
  const std::string eval = std::string("evaluate --snapshot ") + at("p/snapshot.igcf") + kSmall +
                           " --policies igcf,icf_ucb,mf,pop,random --out ";
  ASSERT_EQ(run(eval + at("e1")), 0);
  ASSERT_EQ(run(eval + at("e2")), 0);
  const auto a = slurp(dir_ / "e1" / "summary.json");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "e2" / "summary.json"));
  EXPECT_EQ(slurp(dir_ / "e1" / "interactions.csv"), slurp(dir_ / "e2" / "interactions.csv"));
  EXPECT_EQ(run("inspect-snapshot " + at("p/snapshot.igcf") + " --csv " + at("p/x.csv")), 0);
  EXPECT_EQ(slurp(dir_ / "p" / "x.csv"), slurp(dir_ / "p" / "embeddings.csv"));
}

TEST_F(Cli, CorruptSnapshotIsDataError) {
  std::ofstream(at("junk.igcf")) << "not a snapshot";
  EXPECT_EQ(run("inspect-snapshot " + at("junk.igcf")), 3);
}

TEST_F(Cli, RegretWritesCurveAndSummary) {
  ASSERT_EQ(run("regret --T 50 --reps 4 --set regret.checkpoints=10,50 --out " + at("r")), 0);
  EXPECT_NE(slurp(dir_ / "r" / "regret.csv").find("rep,t,inst_regret,cum_regret"), std::string::npos);
  EXPECT_NE(slurp(dir_ / "r" / "regret_summary.json").find("wide_prior"), std::string::npos);
}

}  // namespace
