#include "hrl/harness.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "hrl/checkpoint.hpp"
#include "hrl/dqn.hpp"
#include "hrl/errors.hpp"
#include "hrl/ppo.hpp"
#include "hrl/rng.hpp"
#include "hrl/rules.hpp"

namespace hrl {

namespace {

// Stream tags for mix_seed.
constexpr std::uint64_t kTrainEpisodes = 0x7472'6169'6e00ULL;
constexpr std::uint64_t kTrainEval = 0x6576'616c'0000ULL;
constexpr std::uint64_t kEvalEpisodes = 0x6576'616c'6570ULL;
constexpr std::uint64_t kAgentInit = 0x6167'656e'7400ULL;
constexpr std::uint64_t kPolicyDraws = 0x706f'6c69'6379ULL;

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void check_stream(const std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw IoError("write failed: " + path.string());
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header) : path_(path), out_(open_output(path)) {
    out_ << header << '\n';
    check_stream(out_, path_);
  }

  template <typename... Fields>
  void row(const Fields&... fields) {
    std::string line;
    bool first = true;
    ((line += (first ? "" : ","), line += cell(fields), first = false), ...);
    out_ << line << '\n';
  }

  void close() {
    out_.flush();
    check_stream(out_, path_);
    out_.close();
  }

 private:
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::uint64_t v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(std::string_view v) { return std::string(v); }

  std::filesystem::path path_;
  std::ofstream out_;
};

class RandomPolicy : public Policy {
 public:
  void begin_episode(std::uint64_t env_seed) override { rng_ = Rng(mix_seed(env_seed, kPolicyDraws)); }
  EgoAction act(const Observation&) override { return action_from_index(rng_.index(kActionCount)); }

 private:
  Rng rng_;
};

class RulesPolicy : public Policy {
 public:
  RulesPolicy(const ExperimentConfig& c) : agent_(c.rules, c.env.road, c.env.scale) {}
  void begin_episode(std::uint64_t) override { agent_.reset(); }
  EgoAction act(const Observation& obs) override { return agent_.act(obs); }

 private:
  RuleAgent agent_;
};

class GreedyQPolicy : public Policy {
 public:
  explicit GreedyQPolicy(DqnLearner learner) : learner_(std::move(learner)) {}
  void begin_episode(std::uint64_t) override {}
  EgoAction act(const Observation& obs) override {
    return action_from_index(learner_.act_greedy(obs.values));
  }

 private:
  DqnLearner learner_;
};

class MostLikelyPolicy : public Policy {
 public:
  explicit MostLikelyPolicy(PpoLearner learner) : learner_(std::move(learner)) {}
  void begin_episode(std::uint64_t) override {}
  EgoAction act(const Observation& obs) override {
    return action_from_index(learner_.act_greedy(obs.values));
  }

 private:
  PpoLearner learner_;
};

// Non-owning views over learners being trained.
class LiveDqnPolicy : public Policy {
 public:
  explicit LiveDqnPolicy(const DqnLearner& l) : l_(l) {}
  void begin_episode(std::uint64_t) override {}
  EgoAction act(const Observation& obs) override { return action_from_index(l_.act_greedy(obs.values)); }

 private:
  const DqnLearner& l_;
};

class LivePpoPolicy : public Policy {
 public:
  explicit LivePpoPolicy(const PpoLearner& l) : l_(l) {}
  void begin_episode(std::uint64_t) override {}
  EgoAction act(const Observation& obs) override { return action_from_index(l_.act_greedy(obs.values)); }

 private:
  const PpoLearner& l_;
};

void require_shape(const NetworkSpec& spec, std::size_t outputs, const std::string& what) {
  if (spec.input_size() != Observation::kSize || spec.output_size() != outputs)
    throw CheckpointError(CheckpointError::Kind::Mismatch,
                          what + " network shape does not match the environment (" +
                              std::to_string(spec.input_size()) + " inputs, " + std::to_string(spec.output_size()) +
                              " outputs)");
}

Checkpoint placeholder_checkpoint(AgentKind agent) {
  Checkpoint cp;
  cp.agent = std::string(to_string(agent));
  return cp;
}

void write_eval_episodes(const std::filesystem::path& path, const std::vector<EpisodeMetrics>& episodes) {
  CsvWriter csv(path, "episode,env_seed,return,length,collided,off_road,mean_speed,lane_changes");
  for (const auto& e : episodes)
    csv.row(e.episode, e.env_seed, e.return_, e.length, e.collided, e.off_road, e.mean_speed, e.lane_changes);
  csv.close();
}

}  // namespace

std::pair<double, double> moving_stats(const std::vector<double>& values, std::size_t end, std::size_t window) {
  const std::size_t begin = end > window ? end - window : 0;
  const std::size_t n = end - begin;
  if (n == 0) return {0.0, 0.0};
  double sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) sum += values[i];
  const double mean = sum / static_cast<double>(n);
  if (n == 1) return {mean, 0.0};
  double ss = 0.0;
  for (std::size_t i = begin; i < end; ++i) ss += (values[i] - mean) * (values[i] - mean);
  return {mean, std::sqrt(ss / static_cast<double>(n - 1))};
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t training_episode_seed(std::uint64_t run_seed, std::uint64_t episode) {
  return mix_seed(mix_seed(run_seed, kTrainEpisodes), episode);
}

std::uint64_t training_eval_seed(std::uint64_t run_seed, std::uint64_t k) {
  return mix_seed(mix_seed(run_seed, kTrainEval), k);
}

std::uint64_t evaluation_seed(const std::vector<std::uint64_t>& seeds, std::uint64_t k) {
  if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  return mix_seed(mix_seed(seeds[k % seeds.size()], kEvalEpisodes), k / seeds.size());
}

std::unique_ptr<Policy> make_random_policy() { return std::make_unique<RandomPolicy>(); }

std::unique_ptr<Policy> make_rules_policy(const ExperimentConfig& config) {
  return std::make_unique<RulesPolicy>(config);
}

std::unique_ptr<Policy> make_checkpoint_policy(const ExperimentConfig& config, AgentKind agent,
                                               const std::filesystem::path& checkpoint) {
  Checkpoint cp;
  try {
    cp = load_checkpoint(checkpoint);
  } catch (const IoError& e) {
    throw CheckpointError(CheckpointError::Kind::Format, e.what());
  }
  switch (agent) {
    case AgentKind::Dqn: {
      auto learner = DqnLearner::from_checkpoint(cp, config.dqn, 0);
      require_shape(learner.spec(), kActionCount, "Q");
      return std::make_unique<GreedyQPolicy>(std::move(learner));
    }
    case AgentKind::Ppo: {
      auto learner = PpoLearner::from_checkpoint(cp, config.ppo, 0);
      require_shape(learner.policy_spec(), kActionCount, "policy");
      require_shape(learner.value_spec(), 1, "value");
      return std::make_unique<MostLikelyPolicy>(std::move(learner));
    }
    default:
      throw ContractViolation(std::string(to_string(agent)) + " agent has no checkpoint");
  }
}

std::unique_ptr<Policy> make_policy(const ExperimentConfig& config, AgentKind agent,
                                    const std::optional<std::filesystem::path>& checkpoint) {
  switch (agent) {
    case AgentKind::Random: return make_random_policy();
    case AgentKind::Rules: return make_rules_policy(config);
    default:
      if (!checkpoint || checkpoint->empty())
        throw CheckpointError(CheckpointError::Kind::Mismatch,
                              std::string(to_string(agent)) + " agent needs a checkpoint");
      return make_checkpoint_policy(config, agent, *checkpoint);
  }
}

EpisodeMetrics run_episode(HighwayEnv& env, Policy& policy, std::uint64_t env_seed,
                           std::vector<TrajectoryRow>* trajectory) {
  EpisodeMetrics m;
  m.env_seed = env_seed;
  Observation obs = env.reset(env_seed);
  policy.begin_episode(env_seed);
  double speed_sum = 0.0;
  while (true) {
    const EgoAction a = policy.act(obs);
    const StepOutcome out = env.step(a);
    m.return_ += out.reward.total;
    ++m.length;
    speed_sum += out.info.ego_speed;
    m.collided = m.collided || out.info.crashed;
    m.off_road = m.off_road || out.info.off_road;
    if (out.info.lane_change_initiated) ++m.lane_changes;
    if (trajectory) {
      const auto& ego = env.ego();
      trajectory->push_back({out.info.sim_time, ego.x, ego.y, out.info.ego_lane, ego.v, static_cast<int>(a), out.reward});
    }
    obs = out.observation;
    if (out.terminated || out.truncated) break;
  }
  m.mean_speed = speed_sum / m.length;
  return m;
}

EvalSummary summarize(const std::vector<EpisodeMetrics>& episodes) {
  EvalSummary s;
  s.episodes = episodes.size();
  if (episodes.empty()) return s;
  std::vector<double> returns;
  double collisions = 0.0, off_road = 0.0, speed = 0.0;
  for (const auto& e : episodes) {
    returns.push_back(e.return_);
    collisions += e.collided ? 1.0 : 0.0;
    off_road += e.off_road ? 1.0 : 0.0;
    speed += e.mean_speed;
  }
  const auto n = static_cast<double>(episodes.size());
  std::tie(s.mean_return, s.std_return) = moving_stats(returns, returns.size(), returns.size());
  s.collision_rate = collisions / n;
  s.off_road_rate = off_road / n;
  s.mean_speed = speed / n;
  return s;
}

std::vector<EpisodeMetrics> evaluate(const EnvConfig& env_config, Policy& policy,
                                     const std::vector<std::uint64_t>& env_seeds) {
  HighwayEnv env(env_config);
  std::vector<EpisodeMetrics> out;
  out.reserve(env_seeds.size());
  for (std::size_t k = 0; k < env_seeds.size(); ++k) {
    out.push_back(run_episode(env, policy, env_seeds[k]));
    out.back().episode = k;
  }
  return out;
}

HighwayTask::HighwayTask(EnvConfig config, std::uint64_t run_seed) : env_(std::move(config)), run_seed_(run_seed) {}

std::vector<double> HighwayTask::reset() {
  fault_open_ = false;
  current_ = EpisodeMetrics{};
  current_.episode = episodes_.size();
  current_.env_seed = training_episode_seed(run_seed_, current_.episode);
  speed_sum_ = 0.0;
  obs_ = env_.reset(current_.env_seed);
  return obs_.to_vector();
}

EnvStep HighwayTask::step(std::size_t action) {
  const StepOutcome out = env_.step(action_from_index(action));
  obs_ = out.observation;
  current_.return_ += out.reward.total;
  ++current_.length;
  speed_sum_ += out.info.ego_speed;
  if (out.info.lane_change_initiated) ++current_.lane_changes;
  const bool fault = out.info.crashed || out.info.off_road;
  current_.collided = current_.collided || out.info.crashed;
  current_.off_road = current_.off_road || out.info.off_road;
  if (fault && !fault_open_) {
    fault_open_ = true;
    ++fault_count_;
  }
  if (fault_open_) fault_duration_ += out.info.fault_time;
  ++global_step_;
  faults_.count.push_back(fault_count_);
  faults_.duration_s.push_back(fault_duration_);

  if (out.terminated || out.truncated) {
    current_.mean_speed = speed_sum_ / current_.length;
    episodes_.push_back(current_);
    if (on_episode) on_episode(episodes_.back());
  }
  if (on_step) on_step(global_step_);
  return {obs_.to_vector(), out.reward.total, out.terminated, out.truncated};
}

TrainResult run_train(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir) {
  TrainResult result;
  result.seed = seed;
  result.checkpoint = out_dir / "checkpoint.bin";

  CsvWriter metrics(out_dir / "metrics.csv",
                    "episode,global_step,return,length,collided,off_road,return_mean_100,return_std_100,faults_cum,"
                    "fault_duration_cum_s");
  CsvWriter faults(out_dir / "faults.csv", "global_step,faults_cum,fault_duration_cum_s");
  CsvWriter evals(out_dir / "eval.csv", "global_step,mean_return,std_return,collision_rate,off_road_rate,mean_speed");

  HighwayTask task(config.env, seed);
  std::vector<double> returns;

  std::optional<DqnLearner> dqn;
  std::optional<PpoLearner> ppo;
  std::unique_ptr<Policy> behaviour;  // rules / random
  std::unique_ptr<Policy> greedy;     // evaluation view
  const std::uint64_t agent_seed = mix_seed(seed, kAgentInit);
  switch (config.agent) {
    case AgentKind::Dqn:
      dqn.emplace(config.dqn.network(Observation::kSize, kActionCount), config.dqn, agent_seed);
      greedy = std::make_unique<LiveDqnPolicy>(*dqn);
      break;
    case AgentKind::Ppo:
      ppo.emplace(config.ppo.policy_network(Observation::kSize, kActionCount),
                  config.ppo.value_network(Observation::kSize), config.ppo, agent_seed);
      greedy = std::make_unique<LivePpoPolicy>(*ppo);
      break;
    case AgentKind::Rules:
      behaviour = make_rules_policy(config);
      greedy = make_rules_policy(config);
      break;
    case AgentKind::Random:
      behaviour = make_random_policy();
      greedy = make_random_policy();
      break;
  }
  const auto checkpoint = [&] {
    if (dqn) return dqn->to_checkpoint();
    if (ppo) return ppo->to_checkpoint();
    return placeholder_checkpoint(config.agent);
  };

  std::vector<std::uint64_t> eval_seeds;
  for (std::uint64_t k = 0; k < config.eval_episodes; ++k) eval_seeds.push_back(training_eval_seed(seed, k));
  std::optional<double> best;

  task.on_episode = [&](const EpisodeMetrics& e) {
    if (!std::isfinite(e.return_)) throw DivergenceError("non-finite episode return");
    returns.push_back(e.return_);
    const auto [mean, sd] = moving_stats(returns, returns.size(), config.moving_window);
    result.episodes.push_back(e);
    result.moving_mean.push_back(mean);
    result.moving_std.push_back(sd);
    metrics.row(e.episode, task.global_step(), e.return_, e.length, e.collided, e.off_road, mean, sd,
                task.faults().count.back(), task.faults().duration_s.back());
  };
  task.on_step = [&](std::uint64_t step) {
    faults.row(step, task.faults().count.back(), task.faults().duration_s.back());
    if (config.eval_every == 0 || step % config.eval_every != 0) return;
    const auto summary = summarize(evaluate(config.env, *greedy, eval_seeds));
    result.evals.push_back({step, summary});
    evals.row(step, summary.mean_return, summary.std_return, summary.collision_rate, summary.off_road_rate,
              summary.mean_speed);
    if (!best || summary.mean_return > *best) {
      best = summary.mean_return;
      result.best_checkpoint = out_dir / "checkpoint_best.bin";
      save_checkpoint(result.best_checkpoint, checkpoint());
    }
  };

  const std::uint64_t total = config.total_env_steps;
  if (ppo) {
    while (task.global_step() < total) {
      const auto length = std::min<std::uint64_t>(config.ppo.rollout_length, total - task.global_step());
      auto batch = ppo->collect_rollout(task, length);
      ppo->compute_advantages(batch);
      ppo->update(batch);
    }
  } else if (total > 0) {
    std::vector<double> s = task.reset();
    if (behaviour) behaviour->begin_episode(task.episode_seed());
    while (task.global_step() < total) {
      std::size_t a = 0;
      if (dqn) {
        a = dqn->act(s);
      } else {
        a = static_cast<std::size_t>(behaviour->act(task.observation()));
      }
      EnvStep step = task.step(a);
      const bool ended = step.terminated || step.truncated;
      if (dqn) {
        dqn->observe({s, a, step.reward, step.observation, step.terminated});
        dqn->train_step();
      }
      if (ended && task.global_step() < total) {
        s = task.reset();
        if (behaviour) behaviour->begin_episode(task.episode_seed());
      } else {
        s = std::move(step.observation);
      }
    }
  }

  result.faults = task.faults();
  save_checkpoint(result.checkpoint, checkpoint());
  metrics.close();
  faults.close();
  evals.close();
  return result;
}

EvalSummary run_eval(const ExperimentConfig& config, const std::optional<std::filesystem::path>& checkpoint,
                     const std::filesystem::path& out_dir) {
  auto policy = make_policy(config, config.agent, checkpoint);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t k = 0; k < config.eval_episodes; ++k) seeds.push_back(evaluation_seed(config.seeds, k));
  const auto episodes = evaluate(config.env, *policy, seeds);
  const auto summary = summarize(episodes);

  write_eval_episodes(out_dir / "episodes.csv", episodes);
  nlohmann::ordered_json j;
  j["agent"] = to_string(config.agent);
  j["scenario"] = to_string(config.env.road.scenario);
  j["episodes"] = summary.episodes;
  j["mean_return"] = summary.mean_return;
  j["std_return"] = summary.std_return;
  j["collision_rate"] = summary.collision_rate;
  j["off_road_rate"] = summary.off_road_rate;
  j["mean_speed"] = summary.mean_speed;
  const auto path = out_dir / "summary.json";
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  check_stream(out, path);
  return summary;
}

EpisodeMetrics export_trajectory(const ExperimentConfig& config, const std::optional<std::filesystem::path>& checkpoint,
                                 std::uint64_t env_seed, const std::filesystem::path& csv_path) {
  auto policy = make_policy(config, config.agent, checkpoint);
  HighwayEnv env(config.env);
  std::vector<TrajectoryRow> rows;
  const auto metrics = run_episode(env, *policy, env_seed, &rows);
  CsvWriter csv(csv_path, "t,x,y,lane,v,action,safety,comfort,efficiency,total");
  for (const auto& r : rows)
    csv.row(r.t, r.x, r.y, r.lane, r.v, r.action, r.reward.safety, r.reward.comfort, r.reward.efficiency, r.reward.total);
  csv.close();
  return metrics;
}

std::vector<CompareRow> compare(const ExperimentConfig& config, const std::filesystem::path& csv_path) {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t k = 0; k < config.eval_episodes; ++k) seeds.push_back(evaluation_seed(config.seeds, k));

  std::vector<CompareRow> rows;
  for (const AgentKind agent : config.compare_agents) {
    CompareRow row;
    row.agent = agent;
    std::optional<std::filesystem::path> cp;
    if (agent == AgentKind::Dqn && !config.dqn_checkpoint.empty()) cp = config.dqn_checkpoint;
    if (agent == AgentKind::Ppo && !config.ppo_checkpoint.empty()) cp = config.ppo_checkpoint;
    try {
      auto policy = make_policy(config, agent, cp);
      row.summary = summarize(evaluate(config.env, *policy, seeds));
    } catch (const CheckpointError& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }

  CsvWriter csv(csv_path, "agent,episodes,mean_return,std_return,collision_rate,off_road_rate,mean_speed,error");
  for (const auto& r : rows) {
    if (r.summary) {
      const auto& s = *r.summary;
      csv.row(to_string(r.agent), s.episodes, s.mean_return, s.std_return, s.collision_rate, s.off_road_rate,
              s.mean_speed, std::string());
    } else {
      std::string err = r.error;
      for (char& c : err)
        if (c == ',' || c == '\n') c = ';';
      csv.row(to_string(r.agent), std::uint64_t{0}, std::string(), std::string(), std::string(), std::string(),
              std::string(), err);
    }
  }
  csv.close();
  return rows;
}

void print_compare_table(const std::vector<CompareRow>& rows, std::ostream& os) {
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %8s %20s %10s %10s %10s\n", "agent", "episodes", "return (mean +- std)",
                "collision", "off-road", "speed");
  os << line;
  for (const auto& r : rows) {
    const std::string name(to_string(r.agent));
    if (!r.summary) {
      os << std::left << std::setw(8) << name << " error: " << r.error << '\n';
      continue;
    }
    const auto& s = *r.summary;
    std::snprintf(line, sizeof line, "%-8s %8zu %11.3f +- %-6.3f %10.3f %10.3f %10.2f\n", name.c_str(), s.episodes,
                  s.mean_return, s.std_return, s.collision_rate, s.off_road_rate, s.mean_speed);
    os << line;
  }
}

}  // namespace hrl
