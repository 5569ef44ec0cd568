#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "csv.hpp"
#include "hrl/checkpoint.hpp"
#include "hrl/errors.hpp"
#include "hrl/harness.hpp"
#include "json.hpp"

using namespace hrl;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "hrl_harness_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small(AgentKind agent, std::uint64_t steps) {
  ExperimentConfig c;
  c.agent = agent;
  c.env.road.scenario = Scenario::Merge;
  c.total_env_steps = steps;
  c.eval_every = 0;
  c.eval_episodes = 5;
  c.dqn.hidden_layers = {16};
  c.dqn.learn_start = 64;
  c.dqn.batch_size = 16;
  c.ppo.hidden_layers = {16};
  c.ppo.rollout_length = 128;
  c.ppo.minibatch_size = 32;
  c.ppo.epochs = 2;
  return c;
}

}  // namespace

TEST(MovingStats, SampleConvention) {
  const std::vector<double> v{1.0, 2.0, 4.0};
  EXPECT_EQ(moving_stats(v, 1, 100), std::make_pair(1.0, 0.0));
  const auto [m, s] = moving_stats(v, 3, 2);
  EXPECT_EQ(m, 3.0);
  EXPECT_DOUBLE_EQ(s, std::sqrt(2.0));
}

TEST(FormatNumber, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, 0.0}) EXPECT_EQ(std::stod(format_number(v)), v);
  EXPECT_EQ(format_number(0.5), "0.5");
}

TEST(Train, ZeroStepsWritesHeadersAndCheckpoint) {
  for (const auto agent : {AgentKind::Dqn, AgentKind::Ppo, AgentKind::Rules, AgentKind::Random}) {
    const auto dir = fresh_dir("zero");
    const auto r = run_train(small(agent, 0), 1, dir);
    for (const char* f : {"metrics.csv", "faults.csv", "eval.csv"}) {
      const auto t = csv::read(dir / f);
      EXPECT_FALSE(t.header.empty());
      EXPECT_TRUE(t.rows.empty()) << f;
    }
    EXPECT_EQ(csv::read(dir / "metrics.csv").header.size(), 10u);
    const auto cp = load_checkpoint(r.checkpoint);
    EXPECT_EQ(cp.agent, to_string(agent));
  }
}

TEST(Train, RandomAgentOnMergeFaults) {
  const auto dir = fresh_dir("random");
  const auto r = run_train(small(AgentKind::Random, 10000), 2, dir);
  ASSERT_EQ(r.faults.size(), 10000u);
  EXPECT_GT(r.faults.count.back(), 0u);
  for (std::size_t i = 1; i < r.faults.size(); ++i) {
    EXPECT_GE(r.faults.count[i], r.faults.count[i - 1]);
    EXPECT_GE(r.faults.duration_s[i], r.faults.duration_s[i - 1]);
  }
}

TEST(Train, MovingStatsMatchOfflineRecomputation) {
  const auto dir = fresh_dir("moving");
  run_train(small(AgentKind::Random, 6000), 3, dir);
  const auto t = csv::read(dir / "metrics.csv");
  const auto returns = t.numbers("return");
  const auto mean = t.numbers("return_mean_100");
  const auto sd = t.numbers("return_std_100");
  ASSERT_GT(returns.size(), 150u);
  for (std::size_t i = 0; i < returns.size(); ++i) {
    const std::size_t b = i + 1 > 100 ? i + 1 - 100 : 0;
    const double n = static_cast<double>(i + 1 - b);
    const double m = std::accumulate(returns.begin() + b, returns.begin() + i + 1, 0.0) / n;
    double ss = 0.0;
    for (std::size_t k = b; k <= i; ++k) ss += (returns[k] - m) * (returns[k] - m);
    const double s = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    EXPECT_NEAR(mean[i], m, 1e-9);
    EXPECT_NEAR(sd[i], s, 1e-9);
  }
  const auto steps = t.numbers("global_step");
  const auto lengths = t.numbers("length");
  EXPECT_EQ(std::accumulate(lengths.begin(), lengths.end(), 0.0), steps.back());
}

TEST(Train, SameSeedSameBytes) {
  for (const auto agent : {AgentKind::Dqn, AgentKind::Ppo}) {
    auto cfg = small(agent, 600);
    cfg.eval_every = 200;
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    run_train(cfg, 5, a);
    run_train(cfg, 5, b);
    for (const char* f : {"metrics.csv", "faults.csv", "eval.csv", "checkpoint.bin", "checkpoint_best.bin"})
      EXPECT_EQ(csv::slurp(a / f), csv::slurp(b / f)) << f;
    const auto c = fresh_dir("det_c");
    run_train(cfg, 6, c);
    EXPECT_NE(csv::slurp(a / "metrics.csv"), csv::slurp(c / "metrics.csv"));
  }
}

TEST(Train, PeriodicEvaluationWritesBestCheckpoint) {
  auto cfg = small(AgentKind::Ppo, 512);
  cfg.eval_every = 128;
  const auto dir = fresh_dir("evals");
  const auto r = run_train(cfg, 7, dir);
  ASSERT_EQ(r.evals.size(), 4u);
  EXPECT_EQ(r.evals[2].global_step, 384u);
  EXPECT_TRUE(fs::exists(r.best_checkpoint));
  EXPECT_EQ(csv::read(dir / "eval.csv").rows.size(), 4u);
}

TEST(Eval, SingleEpisodeHasZeroStd) {
  auto cfg = small(AgentKind::Rules, 0);
  cfg.eval_episodes = 1;
  const auto s = run_eval(cfg, std::nullopt, fresh_dir("eval1"));
  EXPECT_EQ(s.episodes, 1u);
  EXPECT_EQ(s.std_return, 0.0);
}

TEST(Eval, SummaryMatchesEpisodeCsv) {
  auto cfg = small(AgentKind::Random, 0);
  cfg.eval_episodes = 30;
  cfg.seeds = {1, 2, 3};
  const auto dir = fresh_dir("eval30");
  const auto s = run_eval(cfg, std::nullopt, dir);
  const auto t = csv::read(dir / "episodes.csv");
  const auto returns = t.numbers("return");
  ASSERT_EQ(returns.size(), 30u);
  EXPECT_NEAR(std::accumulate(returns.begin(), returns.end(), 0.0) / 30.0, s.mean_return, 1e-12);
  std::ifstream in(dir / "summary.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["mean_return"].get<double>(), s.mean_return);
  EXPECT_EQ(j["episodes"].get<int>(), 30);
}

TEST(Eval, LearnedAgentsNeedACompatibleCheckpoint) {
  const auto cfg = small(AgentKind::Dqn, 0);
  EXPECT_THROW(run_eval(cfg, std::nullopt, fresh_dir("nocp")), CheckpointError);
  const auto dir = fresh_dir("wrongcp");
  const auto ppo = run_train(small(AgentKind::Ppo, 0), 1, dir);
  EXPECT_THROW(run_eval(cfg, ppo.checkpoint, dir), CheckpointError);
}

TEST(Rollout, TrajectorySumsToEpisodeReturn) {
  auto cfg = small(AgentKind::Rules, 0);
  cfg.eval_episodes = 4;
  const auto dir = fresh_dir("traj");
  run_eval(cfg, std::nullopt, dir);
  const auto episodes = csv::read(dir / "episodes.csv");
  const auto seeds = episodes.column("env_seed");
  for (std::size_t k = 0; k < episodes.rows.size(); ++k) {
    const std::uint64_t seed = std::stoull(episodes.rows[k][seeds]);
    const auto path = dir / ("traj_" + std::to_string(k) + ".csv");
    const auto m = export_trajectory(cfg, std::nullopt, seed, path);
    const auto t = csv::read(path);
    EXPECT_EQ(t.header.size(), kTrajectoryColumns);
    for (const auto& row : t.rows) EXPECT_EQ(row.size(), kTrajectoryColumns);
    double total = 0.0;
    for (double r : t.numbers("total")) total += r;
    EXPECT_EQ(total, std::stod(episodes.rows[k][episodes.column("return")]));
    EXPECT_EQ(total, m.return_);
  }
}

TEST(Rollout, LateralMotionIsMonotoneDuringLaneChanges) {
  auto cfg = small(AgentKind::Random, 0);
  const auto dir = fresh_dir("lateral");
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    export_trajectory(cfg, std::nullopt, seed, dir / "t.csv");
    const auto y = csv::read(dir / "t.csv").numbers("y");
    const auto lanes = csv::read(dir / "t.csv").numbers("lane");
    // Per decision step y moves at most one lane width.
    for (std::size_t i = 1; i < y.size(); ++i) EXPECT_LE(std::abs(y[i] - y[i - 1]), 4.0 + 1e-9);
    for (double l : lanes) EXPECT_TRUE(l >= 0 && l < cfg.env.road.lane_count);
  }
}

TEST(Compare, IdenticalAgentsGiveIdenticalRows) {
  auto cfg = small(AgentKind::Random, 0);
  cfg.compare_agents = {AgentKind::Random, AgentKind::Rules, AgentKind::Random, AgentKind::Dqn};
  const auto dir = fresh_dir("compare");
  const auto rows = compare(cfg, dir / "compare.csv");
  ASSERT_EQ(rows.size(), 4u);
  ASSERT_TRUE(rows[0].summary && rows[2].summary);
  EXPECT_EQ(rows[0].summary->mean_return, rows[2].summary->mean_return);
  EXPECT_GE(rows[0].summary->collision_rate, 0.0);
  EXPECT_FALSE(rows[3].summary);  // no DQN checkpoint configured
  EXPECT_FALSE(rows[3].error.empty());

  cfg.agent = AgentKind::Rules;
  const auto eval = run_eval(cfg, std::nullopt, dir);
  EXPECT_EQ(rows[1].summary->mean_return, eval.mean_return);
  const auto t = csv::read(dir / "compare.csv");
  EXPECT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[0], t.rows[2]);
}
