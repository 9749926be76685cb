#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "igcf/regret_lab.hpp"
#include "test_helpers.hpp"

namespace igcf {
namespace {

using testing::random_matrix;

TEST(SampleEnv, NegligibleTruncation) {
  SyntheticEnvConfig cfg = make_lab_config({2, 200, 0.5, 10.0, 0.1, 1.0, 0.5, 1.0}, 1);
  const auto env = sample_env(cfg, 3);
  EXPECT_GT(env.acceptance_rate, 0.999);
  EXPECT_EQ(env.items.cols(), 200);
}

TEST(SampleEnv, NormsRespectBound) {
  const auto env = sample_env(make_lab_config({5, 400, 0.5, 0.8, 0.5, 1.0, 0.2, 1.0}, 2), 4);
  EXPECT_LT(env.acceptance_rate, 0.9);
  for (Eigen::Index j = 0; j < env.items.cols(); ++j) EXPECT_LE(env.items.col(j).norm(), 0.8);
}

TEST(SampleEnv, RejectsHopelessTruncation) {
  EXPECT_THROW(sample_env(make_lab_config({4, 10, 0.5, 0.01, 1.0, 1.0, 0.5, 1.0}, 1), 1), ConfigError);
}

TEST(SampleEnv, RejectsShapeMismatch) {
  auto cfg = make_lab_config({}, 1);
  cfg.prior_mean = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(sample_env(cfg, 1), ConfigError);
}

// For Sigma_A = s^2 I truncated to ||x|| <= a, E||x||^2 =
// s^2 d P(chi2_{d+2} <= c) / P(chi2_d <= c) with c = a^2 / s^2, and by symmetry
// the covariance is that over d times the identity.
TEST(SampleEnv, CovarianceMatchesTruncatedOracle) {
  const int d = 3;
  const double s = 0.6, a = 1.0;
  std::mt19937_64 rng(77);
  const auto sample = sample_truncated_gaussian(s * s * Eigen::MatrixXd::Identity(d, d), a, 100000, rng);
  const Eigen::MatrixXd emp = sample.draws * sample.draws.transpose() / 100000.0;
  const double c = a * a / (s * s);
  namespace bm = boost::math;
  const double second = s * s * d * bm::cdf(bm::chi_squared(d + 2), c) / bm::cdf(bm::chi_squared(d), c);
  const Eigen::MatrixXd oracle = (second / d) * Eigen::MatrixXd::Identity(d, d);
  EXPECT_LE((emp - oracle).norm() / oracle.norm(), 0.02);
  EXPECT_NEAR(sample.acceptance_rate, bm::cdf(bm::chi_squared(d), c), 0.01);
}

TEST(SufficientRounds, Examples) {
  Eigen::MatrixXd seq(2, 2);
  seq << 1, 0, 0, 1;
  EXPECT_EQ(sufficient_rounds(seq, 1.0, 2), std::optional<std::size_t>(2));
  Eigen::MatrixXd same(2, 50);
  same.row(0).setOnes();
  same.row(1).setZero();
  EXPECT_EQ(sufficient_rounds(same, 1.0, 2), std::nullopt);
}

std::optional<std::size_t> tau_oracle(const Eigen::MatrixXd& chosen, double lambda_a, int d) {
  for (Eigen::Index t = 1; t <= chosen.cols(); ++t) {
    const Eigen::MatrixXd v = chosen.leftCols(t) * chosen.leftCols(t).transpose();
    const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(v).eigenvalues().minCoeff();
    if (lmin >= lambda_a * d / 2.0) return static_cast<std::size_t>(t);
  }
  return std::nullopt;
}

TEST(SufficientRounds, MatchesDenseOracleOnUcbRun) {
  const auto env = sample_env(make_lab_config({}, 5), 6);
  PolicyConfig ucb;
  ucb.sigma_noise = env.config.sigma_noise;
  ucb.delta = 0.01;
  auto state = UserPosterior::from_moments(env.config.prior_mean, env.config.prior_cov);
  std::mt19937_64 rng(7);
  const Eigen::VectorXd theta = env.config.prior_mean;
  std::normal_distribution<double> z;
  Eigen::MatrixXd chosen(4, 300);
  for (int t = 0; t < 300; ++t) {
    Eigen::Index best;
    ucb_scores(state, env.items, ucb).maxCoeff(&best);
    chosen.col(t) = env.items.col(best);
    state.observe(env.items.col(best), theta.dot(env.items.col(best)) + 0.5 * z(rng), 0.5);
  }
  for (double lambda_a : {0.01, 0.02, 0.05, env.lambda_sigma_a()}) {
    EXPECT_EQ(sufficient_rounds(chosen, lambda_a, 4), tau_oracle(chosen, lambda_a, 4)) << lambda_a;
  }
}

TEST(SufficientRounds, NonIncreasingAsThresholdDrops) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd chosen = random_matrix(3, 80, rng, 0.5);
  std::size_t last = std::numeric_limits<std::size_t>::max();
  for (double lambda_a : {2.0, 1.0, 0.5, 0.25, 0.1, 0.01}) {
    const auto tau = sufficient_rounds(chosen, lambda_a, 3);
    const std::size_t v = tau.value_or(std::numeric_limits<std::size_t>::max());
    EXPECT_LE(v, last);
    last = v;
  }
}

TEST(Lemma1, FixtureValues) {
  const auto c = lemma1_constants(100, 2, 100, 1.0);
  EXPECT_NEAR(c.gamma, 16.81439399455172, 1e-10);
  EXPECT_NEAR(c.c1, 33.71046265760838, 1e-10);
  EXPECT_NEAR(c.c2, 113089.5381616068, 1e-6);
  EXPECT_NEAR(c.threshold, 27.60975052773604, 1e-10);
  EXPECT_TRUE(c.feasible);
}

TEST(Lemma1, Homogeneity) {
  const auto a = lemma1_constants(300, 3, 500, 0.7);
  const auto b = lemma1_constants(300, 3, 500, 1.4);
  EXPECT_NEAR(b.gamma, 2 * a.gamma, 1e-12);
  EXPECT_NEAR(b.c1, 2 * a.c1, 1e-12);
  EXPECT_NEAR(b.c2, 4 * a.c2, 1e-6);
}

TEST(Lemma1, InfeasibleBelowThreshold) {
  EXPECT_FALSE(lemma1_constants(20, 2, 100, 1.0).feasible);
  EXPECT_FALSE(lemma1_constants(24, 2, 100, 1.0).feasible);
  EXPECT_TRUE(lemma1_constants(25, 2, 100, 1.0).feasible);
}

TEST(Theorem2, FixtureValue) {
  const auto terms = theorem2_terms(Theorem2Params{});
  EXPECT_NEAR(terms.gamma, 16.78553685739568, 1e-10);
  EXPECT_NEAR(terms.c_bad, 188.3032034160454, 1e-9);
  EXPECT_NEAR(terms.bound, 2097.046178540895, 1e-8);
}

TEST(Theorem2, NonNegative) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    Theorem2Params p;
    p.rounds = 1 + 1000 * u(rng);
    p.tau = 100 * u(rng);
    p.dim = 1 + std::floor(4 * u(rng));
    p.num_items = 1 + std::floor(40 * u(rng));
    p.num_tasks = 1 + std::floor(100 * u(rng));
    p.lambda_bar = u(rng);
    p.sigma_noise = u(rng);
    p.item_bound = u(rng);
    p.mean_bound = u(rng);
    p.k1 = u(rng);
    p.delta = u(rng) / 5.01;
    EXPECT_GE(theorem2_bound(p), 0.0);
  }
  Theorem2Params inf;
  inf.tau = std::numeric_limits<double>::infinity();
  EXPECT_TRUE(std::isinf(theorem2_bound(inf)));
}

TEST(Theorem2, RootTShapeUpToLogs) {
  auto ratio = [](double t) {
    Theorem2Params p;
    p.rounds = t;
    return theorem2_bound(p) / (std::sqrt(t) * std::log(t));
  };
  EXPECT_NEAR(ratio(1e9) / ratio(1e8), 1.0, 0.05);
  EXPECT_NEAR(ratio(1e12) / ratio(1e11), 1.0, 0.03);
}

SyntheticEnv lab_env() { return sample_env(make_lab_config({}, 11), 12); }

TEST(EmpiricalRegret, OracleHasZeroRegret) {
  const auto env = lab_env();
  OracleAgent oracle;
  const auto curve = empirical_regret(env, oracle, 100, 20, 1);
  EXPECT_EQ(curve.cum.back(), 0.0);
}

TEST(EmpiricalRegret, UniformGrowsLinearly) {
  const auto env = lab_env();
  UniformAgent uniform;
  const auto curve = empirical_regret(env, uniform, 500, 200, 2);
  // Least-squares line through (t, cum) and its R^2.
  const double n = 500;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t t = 1; t <= 500; ++t) {
    const double x = static_cast<double>(t), y = curve.cum[t - 1];
    sx += x, sy += y, sxx += x * x, sxy += x * y, syy += y * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double r = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  EXPECT_GT(slope, 0.0);
  EXPECT_GE(r * r, 0.99);
}

TEST(EmpiricalRegret, UcbAverageRegretFalls) {
  const auto env = lab_env();
  PolicyConfig ucb;
  ucb.sigma_noise = env.config.sigma_noise;
  ucb.delta = 0.01;
  BayesAgent agent(env.config.prior_mean, env.config.prior_cov, ucb);
  const auto curve = empirical_regret(env, agent, 2000, 200, 3);
  for (std::size_t t = 200; t < 2000; t += 200)
    EXPECT_GT(curve.cumulative_at(t) / t, curve.cumulative_at(t + 200) / (t + 200)) << t;
  for (std::size_t t = 1; t < curve.cum.size(); ++t) EXPECT_GE(curve.cum[t], curve.cum[t - 1]);
}

TEST(EmpiricalRegret, CommonRandomNumbersAcrossAgents) {
  const auto env = lab_env();
  OracleAgent a, b;
  const auto x = empirical_regret(env, a, 10, 5, 4);
  const auto y = empirical_regret(env, b, 10, 5, 4);
  EXPECT_EQ(x.seeds, y.seeds);
}

TEST(EmpiricalRegret, CsvLayout) {
  const auto env = lab_env();
  UniformAgent uniform;
  const auto curve = empirical_regret(env, uniform, 3, 2, 5);
  std::stringstream out;
  write_regret_csv(out, curve);
  std::string line;
  std::getline(out, line);
  EXPECT_EQ(line, "rep,t,inst_regret,cum_regret");
  int rows = 0;
  while (std::getline(out, line)) ++rows;
  EXPECT_EQ(rows, 6);
  const auto summary = regret_summary(curve, {1, 3}, Theorem2Params{});
  EXPECT_EQ(summary["checkpoints"].size(), 2u);
}

}  // namespace
}  // namespace igcf
