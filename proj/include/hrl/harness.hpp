#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hrl/config.hpp"
#include "hrl/episodic_env.hpp"
#include "hrl/env.hpp"

namespace hrl {

struct EpisodeMetrics {
  std::uint64_t episode = 0;
  std::uint64_t env_seed = 0;
  double return_ = 0.0;  ///< undiscounted
  int length = 0;        ///< decision steps
  bool collided = false;
  bool off_road = false;
  double mean_speed = 0.0;
  int lane_changes = 0;
};

/// Cumulative fault count and duration after every global step. A fault opens
/// when the ego first crashes or leaves the road and closes at the next reset.
struct FaultLog {
  std::vector<std::uint64_t> count;
  std::vector<double> duration_s;

  std::size_t size() const { return count.size(); }
};

/// Moving mean and sample std of the last `window` values ending at `end` (exclusive).
/// The std of a single value is 0.
std::pair<double, double> moving_stats(const std::vector<double>& values, std::size_t end, std::size_t window);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

// Seed derivation. Every random stream in a run is a function of one of these.
std::uint64_t training_episode_seed(std::uint64_t run_seed, std::uint64_t episode);
std::uint64_t training_eval_seed(std::uint64_t run_seed, std::uint64_t k);
/// Env seed of evaluation episode k over a seed list (round-robin over the list).
std::uint64_t evaluation_seed(const std::vector<std::uint64_t>& seeds, std::uint64_t k);

/// A decision maker over raw observations. Stochastic policies draw from a
/// stream seeded by begin_episode so each episode is reproducible on its own.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode(std::uint64_t env_seed) = 0;
  virtual EgoAction act(const Observation& obs) = 0;
};

std::unique_ptr<Policy> make_random_policy();
std::unique_ptr<Policy> make_rules_policy(const ExperimentConfig& config);
/// Greedy / most-likely policies from a checkpoint file; throws CheckpointError
/// when the file is unreadable or for another agent or network shape.
std::unique_ptr<Policy> make_checkpoint_policy(const ExperimentConfig& config, AgentKind agent,
                                               const std::filesystem::path& checkpoint);
/// Resolves `agent` to a policy, loading `checkpoint` for learned agents.
std::unique_ptr<Policy> make_policy(const ExperimentConfig& config, AgentKind agent,
                                    const std::optional<std::filesystem::path>& checkpoint);

struct TrajectoryRow {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  int lane = 0;
  double v = 0.0;
  int action = 0;
  RewardBreakdown reward;
};

/// Runs one full episode; appends per-step rows to `trajectory` when given.
EpisodeMetrics run_episode(HighwayEnv& env, Policy& policy, std::uint64_t env_seed,
                           std::vector<TrajectoryRow>* trajectory = nullptr);

struct EvalSummary {
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double std_return = 0.0;  ///< sample std; 0 for one episode
  double collision_rate = 0.0;
  double off_road_rate = 0.0;
  double mean_speed = 0.0;
};

EvalSummary summarize(const std::vector<EpisodeMetrics>& episodes);

std::vector<EpisodeMetrics> evaluate(const EnvConfig& env, Policy& policy, const std::vector<std::uint64_t>& env_seeds);

/// Training-side wrapper of the simulator: seeds episodes from the run seed,
/// tracks per-episode metrics and the fault log, and fires a hook after every
/// global step.
class HighwayTask : public EpisodicEnv {
 public:
  HighwayTask(EnvConfig config, std::uint64_t run_seed);

  std::size_t observation_size() const override { return Observation::kSize; }
  std::size_t action_count() const override { return kActionCount; }
  std::vector<double> reset() override;
  EnvStep step(std::size_t action) override;

  const Observation& observation() const { return obs_; }
  std::uint64_t episode_seed() const { return current_.env_seed; }
  std::uint64_t global_step() const { return global_step_; }
  const std::vector<EpisodeMetrics>& episodes() const { return episodes_; }
  const FaultLog& faults() const { return faults_; }

  std::function<void(const EpisodeMetrics&)> on_episode;
  std::function<void(std::uint64_t global_step)> on_step;

 private:
  HighwayEnv env_;
  std::uint64_t run_seed_;
  Observation obs_;
  EpisodeMetrics current_;
  double speed_sum_ = 0.0;
  bool fault_open_ = false;
  std::uint64_t global_step_ = 0;
  std::uint64_t fault_count_ = 0;
  double fault_duration_ = 0.0;
  std::vector<EpisodeMetrics> episodes_;
  FaultLog faults_;
};

struct EvalPoint {
  std::uint64_t global_step = 0;
  EvalSummary summary;
};

struct TrainResult {
  std::uint64_t seed = 0;
  std::vector<EpisodeMetrics> episodes;
  std::vector<double> moving_mean;  ///< per episode, as logged
  std::vector<double> moving_std;
  FaultLog faults;
  std::vector<EvalPoint> evals;
  std::filesystem::path checkpoint;
  std::filesystem::path best_checkpoint;  ///< empty when no evaluation ran
};

/// Trains config.agent for one seed and writes into `out_dir`:
///   metrics.csv     one row per finished episode
///   faults.csv      cumulative fault series, one row per global step
///   eval.csv        one row per periodic evaluation
///   checkpoint.bin  final state; checkpoint_best.bin at the best evaluation
/// Rules and random agents are "trained" too so their logs are comparable.
TrainResult run_train(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir);

/// Evaluates over eval_episodes episodes seeded from the config seed list and
/// writes summary.json and episodes.csv into `out_dir`.
EvalSummary run_eval(const ExperimentConfig& config, const std::optional<std::filesystem::path>& checkpoint,
                     const std::filesystem::path& out_dir);

inline constexpr std::size_t kTrajectoryColumns = 10;

/// Writes one row per decision step of the episode with env seed `env_seed`.
EpisodeMetrics export_trajectory(const ExperimentConfig& config, const std::optional<std::filesystem::path>& checkpoint,
                                 std::uint64_t env_seed, const std::filesystem::path& csv_path);

struct CompareRow {
  AgentKind agent = AgentKind::Random;
  std::optional<EvalSummary> summary;
  std::string error;  ///< set when the agent could not be evaluated
};

/// Evaluates every compare agent on the same episode seeds as run_eval and
/// writes `csv_path`. Agents whose checkpoint fails to load get an error row.
std::vector<CompareRow> compare(const ExperimentConfig& config, const std::filesystem::path& csv_path);

void print_compare_table(const std::vector<CompareRow>& rows, std::ostream& os);

}  // namespace hrl
