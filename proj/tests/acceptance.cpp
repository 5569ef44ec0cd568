// Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any fails.
//
//   acceptance [work_dir]
//
// Learning criteria train DQN, PPO and a random agent on Merge for three seeds
// in-process; the determinism criterion drives the CLI binary.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "chain_mdp.hpp"
#include "csv.hpp"
#include "gae_oracle.hpp"
#include "hrl/dqn.hpp"
#include "hrl/env.hpp"
#include "hrl/harness.hpp"
#include "hrl/mlp.hpp"
#include "hrl/ppo.hpp"
#include "hrl/reward.hpp"
#include "hrl/rng.hpp"

using namespace hrl;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- 1

LossProbe squared_error_probe(std::vector<double> target) {
  return {[target](std::span<const double> y) {
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * (y[i] - target[i]) * (y[i] - target[i]);
            return s;
          },
          [target](std::span<const double> y) {
            std::vector<double> g(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] - target[i];
            return g;
          }};
}

LossProbe log_prob_probe(std::size_t action) {
  return {[action](std::span<const double> y) { return log_softmax(y)[action]; },
          [action](std::span<const double> y) {
            auto g = softmax(y);
            for (double& v : g) v = -v;
            g[action] += 1.0;
            return g;
          }};
}

Verdict gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(11);
  double worst = 0.0;
  for (const auto act : {Activation::ReLU, Activation::Tanh}) {
    const NetworkSpec spec{{Observation::kSize, 128, 128, kActionCount}, act};
    const auto params = init_parameters(spec, 5);
    for (int trial = 0; trial < 2; ++trial) {
      std::vector<double> x(spec.input_size()), target(spec.output_size());
      for (double& v : x) v = rng.uniform(-1, 1);
      for (double& v : target) v = rng.uniform(-1, 1);
      worst = std::max(worst, gradient_check(spec, params.values, x, squared_error_probe(target)));
      worst = std::max(worst, gradient_check(spec, params.values, x, log_prob_probe(rng.index(kActionCount))));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0, fmt("max relative error %.3g over 8 checks, %.1f s", worst, secs)};
}

// ---------------------------------------------------------------- 2

RolloutBatch random_segment(Rng& rng, std::size_t n) {
  RolloutBatch b;
  b.observation_size = 1;
  for (std::size_t t = 0; t < n; ++t) {
    b.observations.push_back(0.0);
    b.actions.push_back(0);
    b.rewards.push_back(rng.uniform(-1, 1));
    b.values.push_back(rng.uniform(-2, 2));
    b.log_probs.push_back(0.0);
    const double u = rng.uniform();
    const bool end = u < 0.2;
    const bool done = end && u < 0.12;
    b.episode_ends.push_back(end);
    b.dones.push_back(done);
    b.bootstrap_values.push_back(end && !done ? rng.uniform(-2, 2) : 0.0);
  }
  b.last_value = b.episode_ends.back() ? 0.0 : rng.uniform(-2, 2);
  return b;
}

Verdict gae_equivalence() {
  Rng rng(22);
  double worst = 0.0;
  const std::pair<double, double> settings[] = {{0.99, 0.95}, {1.0, 1.0}, {0.9, 0.0}};
  for (const auto& [gamma, lambda] : settings) {
    for (int i = 0; i < 1000; ++i) {
      const auto b = random_segment(rng, 1 + rng.index(20));
      const auto got = compute_gae(b, gamma, lambda, false);
      const auto want = oracle::double_sum_advantages(b, gamma, lambda);
      for (std::size_t t = 0; t < b.size(); ++t) {
        worst = std::max(worst, std::abs(got.advantages[t] - want[t]));
        worst = std::max(worst, std::abs(got.value_targets[t] - (want[t] + b.values[t])));
      }
    }
  }
  return {worst <= 1e-10, fmt("max |recursive - double sum| %.3g over 3 x 1000 segments", worst)};
}

// ---------------------------------------------------------------- 3

Verdict clip_identities() {
  const double ratios[] = {0.5, 0.79, 0.8, 1.0, 1.2, 1.21, 1.5};
  // min(rho A, clip(rho, 0.8, 1.2) A) written out per advantage sign.
  const double for_pos[] = {0.5, 0.79, 0.8, 1.0, 1.2, 1.2, 1.2};
  const double for_neg[] = {-0.8, -0.8, -0.8, -1.0, -1.2, -1.21, -1.5};
  int mismatches = 0, bound_violations = 0;
  for (std::size_t i = 0; i < std::size(ratios); ++i) {
    for (const double a : {-1.0, 0.0, 1.0}) {
      const double want = a > 0 ? for_pos[i] : (a < 0 ? for_neg[i] : 0.0);
      const double got = clipped_surrogate(ratios[i], a, 0.2);
      if (got != want) ++mismatches;
      if (got > ratios[i] * a) ++bound_violations;
    }
  }
  return {mismatches == 0 && bound_violations == 0,
          fmt("21 grid points, %d mismatches, %d above rho*A", mismatches, bound_violations)};
}

// ---------------------------------------------------------------- 4

Verdict tabular_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const double gamma = 0.9;
  const auto q_star = chain::value_iteration(gamma);

  DqnConfig cfg;
  cfg.gamma = gamma;
  cfg.hidden_layers = {};
  cfg.learning_rate = 0.01;
  cfg.batch_size = 32;
  cfg.replay_capacity = 10000;
  cfg.learn_start = 32;
  cfg.target_sync_every = 25;
  cfg.epsilon_start = 1.0;
  cfg.epsilon_end = 0.1;
  cfg.epsilon_decay_steps = 500;
  DqnLearner dqn(cfg.network(chain::kStates, chain::kActions), cfg, 4);

  auto greedy_is_optimal = [&] {
    for (std::size_t s = 0; s < chain::kTerminal; ++s) {
      const std::size_t best = q_star[s][1] > q_star[s][0] ? 1 : 0;
      if (dqn.act_greedy(chain::ChainEnv::one_hot(s)) != best) return false;
    }
    return true;
  };
  auto max_q_error = [&] {
    double worst = 0.0;
    for (std::size_t s = 0; s < chain::kTerminal; ++s) {
      const auto q = dqn.q_values(chain::ChainEnv::one_hot(s));
      for (std::size_t a = 0; a < chain::kActions; ++a) worst = std::max(worst, std::abs(q[a] - q_star[s][a]));
    }
    return worst;
  };

  chain::ChainEnv env(50);
  int first_optimal = -1;
  for (int episode = 1; episode <= 200; ++episode) {
    auto obs = env.reset();
    for (;;) {
      const std::size_t a = dqn.act(obs);
      const auto step = env.step(a);
      dqn.observe({obs, a, step.reward, step.observation, step.terminated});
      dqn.train_step();
      obs = step.observation;
      if (step.terminated || step.truncated) break;
    }
    if (first_optimal < 0 && greedy_is_optimal()) first_optimal = episode;
  }
  const bool optimal = greedy_is_optimal();
  const double err = max_q_error();
  const double secs = seconds_since(t0);
  return {optimal && first_optimal > 0 && err < 1e-2 && secs < 60.0,
          fmt("greedy policy optimal from episode %d, optimal after 200: %s, max |Q - Q*| %.3g, %.1f s",
              first_optimal, optimal ? "yes" : "no", err, secs)};
}

// ---------------------------------------------------------------- 5-7

const std::vector<std::uint64_t> kSeeds{0, 1, 2};
constexpr std::uint64_t kDqnSteps = 50000;
constexpr std::uint64_t kPpoSteps = 25 * 2048;

ExperimentConfig merge_config(AgentKind agent, std::uint64_t steps, std::uint64_t eval_every) {
  ExperimentConfig c;
  c.agent = agent;
  c.seeds = kSeeds;
  c.env.road.scenario = Scenario::Merge;
  c.total_env_steps = steps;
  c.eval_every = eval_every;
  c.eval_episodes = 20;
  return c;
}

struct Runs {
  std::map<AgentKind, std::vector<TrainResult>> by_agent;
  std::map<AgentKind, ExperimentConfig> configs;
};

Runs train_all(const fs::path& root) {
  Runs runs;
  runs.configs[AgentKind::Dqn] = merge_config(AgentKind::Dqn, kDqnSteps, 5000);
  runs.configs[AgentKind::Ppo] = merge_config(AgentKind::Ppo, kPpoSteps, 5120);
  // Random is evaluated on both schedules, so it gets one run per schedule.
  runs.configs[AgentKind::Random] = merge_config(AgentKind::Random, kDqnSteps, 5000);
  for (const auto& [agent, cfg] : runs.configs) {
    for (const auto seed : kSeeds) {
      const auto t0 = std::chrono::steady_clock::now();
      runs.by_agent[agent].push_back(
          run_train(cfg, seed, root / std::string(to_string(agent)) / ("seed_" + std::to_string(seed))));
      std::printf("  trained %s seed %llu in %.0f s\n", std::string(to_string(agent)).c_str(),
                  static_cast<unsigned long long>(seed), seconds_since(t0));
      std::fflush(stdout);
    }
  }
  auto random_ppo = merge_config(AgentKind::Random, kPpoSteps, 5120);
  for (const auto seed : kSeeds)
    runs.by_agent[AgentKind::Random].push_back(
        run_train(random_ppo, seed, root / "random_ppo_schedule" / ("seed_" + std::to_string(seed))));
  return runs;
}

// Mean over the last quarter (at least one) of the periodic evaluations.
double final_eval_mean(const TrainResult& r) {
  const std::size_t n = r.evals.size();
  const std::size_t k = std::max<std::size_t>(1, (n + 3) / 4);
  double s = 0.0;
  for (std::size_t i = n - k; i < n; ++i) s += r.evals[i].summary.mean_return;
  return s / static_cast<double>(k);
}

// Mean of the logged moving mean over the first and last quarter of episodes.
std::pair<double, double> quartile_trend(const TrainResult& r) {
  const std::size_t n = r.moving_mean.size();
  const std::size_t q = std::max<std::size_t>(1, n / 4);
  const std::vector<double> first(r.moving_mean.begin(), r.moving_mean.begin() + q);
  const std::vector<double> last(r.moving_mean.end() - q, r.moving_mean.end());
  return {mean(first), mean(last)};
}

Verdict learning_signal(const Runs& runs) {
  const auto& random = runs.by_agent.at(AgentKind::Random);
  bool pass = true;
  std::string detail;
  for (const auto agent : {AgentKind::Dqn, AgentKind::Ppo}) {
    const auto& rs = runs.by_agent.at(agent);
    // Random runs 0..2 share the DQN schedule, 3..5 the PPO one.
    const std::size_t base = agent == AgentKind::Dqn ? 0 : kSeeds.size();
    std::vector<double> learned, baseline, first, last;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      learned.push_back(final_eval_mean(rs[i]));
      baseline.push_back(final_eval_mean(random[base + i]));
      const auto [f, l] = quartile_trend(rs[i]);
      first.push_back(f);
      last.push_back(l);
    }
    const double ratio = mean(learned) / mean(baseline);
    const bool ok = ratio >= 1.5 && mean(last) >= mean(first);
    pass = pass && ok;
    detail += fmt("%s final eval %.2f vs random %.2f (x%.2f), moving mean %.2f -> %.2f; ",
                  std::string(to_string(agent)).c_str(), mean(learned), mean(baseline), ratio, mean(first),
                  mean(last));
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

Verdict superiority(const Runs& runs) {
  const auto& cfg = runs.configs.at(AgentKind::Ppo);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t k = 0; k < 100; ++k) seeds.push_back(evaluation_seed(cfg.seeds, k));
  auto ppo = make_checkpoint_policy(cfg, AgentKind::Ppo, runs.by_agent.at(AgentKind::Ppo)[0].best_checkpoint);
  auto rules = make_rules_policy(cfg);
  auto random = make_random_policy();
  const auto p = summarize(evaluate(cfg.env, *ppo, seeds));
  const auto r = summarize(evaluate(cfg.env, *rules, seeds));
  const auto x = summarize(evaluate(cfg.env, *random, seeds));
  const bool ok = p.mean_return >= r.mean_return && p.collision_rate * 5.0 <= x.collision_rate;
  return {ok, fmt("ppo return %.2f (collisions %.2f), rules %.2f (%.2f), random %.2f (%.2f)", p.mean_return,
                  p.collision_rate, r.mean_return, r.collision_rate, x.mean_return, x.collision_rate)};
}

bool nondecreasing(const FaultLog& f) {
  for (std::size_t i = 1; i < f.size(); ++i)
    if (f.count[i] < f.count[i - 1] || f.duration_s[i] < f.duration_s[i - 1]) return false;
  return true;
}

Verdict fault_properties(const Runs& runs) {
  int runs_checked = 0, non_monotone = 0;
  for (const auto& [agent, rs] : runs.by_agent) {
    for (const auto& r : rs) {
      ++runs_checked;
      if (!nondecreasing(r.faults)) ++non_monotone;
    }
  }
  const auto& random = runs.by_agent.at(AgentKind::Random);
  bool bounded = true;
  std::string detail;
  for (const auto agent : {AgentKind::Dqn, AgentKind::Ppo}) {
    const auto& rs = runs.by_agent.at(agent);
    const std::size_t base = agent == AgentKind::Dqn ? 0 : kSeeds.size();
    detail += std::string(to_string(agent)) + " faults";
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const auto mine = rs[i].faults.count.back();
      const auto theirs = random[base + i].faults.count.back();
      bounded = bounded && mine <= theirs;
      detail += fmt(" %llu/%llu", static_cast<unsigned long long>(mine), static_cast<unsigned long long>(theirs));
    }
    detail += " vs random; ";
  }
  return {non_monotone == 0 && bounded, detail + fmt("%d of %d runs monotone", runs_checked - non_monotone, runs_checked)};
}

// ---------------------------------------------------------------- 8

Verdict determinism(const fs::path& root) {
  const char* files[] = {"metrics.csv", "faults.csv", "eval.csv", "checkpoint.bin", "checkpoint_best.bin"};
  int compared = 0, differing = 0;
  std::string failure;
  for (const auto agent : {AgentKind::Dqn, AgentKind::Ppo}) {
    auto cfg = merge_config(agent, 3000, 1500);
    cfg.seeds = {3, 4};
    cfg.eval_episodes = 3;
    cfg.dqn.learn_start = 200;
    cfg.ppo.rollout_length = 512;
    const auto dir = root / ("determinism_" + std::string(to_string(agent)));
    fs::create_directories(dir);
    std::ofstream(dir / "run.ini") << render_config(cfg);
    for (const char* run : {"a", "b"}) {
      const std::string cmd = std::string("\"") + HRL_CLI + "\" train --config \"" + (dir / "run.ini").string() +
                              "\" --out \"" + (dir / run).string() + "\" > /dev/null";
      if (const int rc = std::system(cmd.c_str()); rc != 0) failure += fmt("train exited %d; ", rc);
    }
    for (const auto seed : cfg.seeds) {
      for (const char* f : files) {
        const auto rel = fs::path("seed_" + std::to_string(seed)) / f;
        const auto a = csv::slurp(dir / "a" / rel);
        const auto b = csv::slurp(dir / "b" / rel);
        ++compared;
        if (a.empty() || a != b) ++differing;
      }
    }
  }
  return {failure.empty() && differing == 0,
          failure + fmt("%d output files compared across two CLI runs, %d differ", compared, differing)};
}

// ---------------------------------------------------------------- 9

Verdict reward_decomposition() {
  int steps = 0, mismatches = 0, out_of_range = 0;
  Rng rng(99);
  for (const auto scenario : {Scenario::Highway, Scenario::Merge}) {
    EnvConfig cfg;
    cfg.road.scenario = scenario;
    HighwayEnv env(cfg);
    env.reset(rng.next_u64());
    while (steps < (scenario == Scenario::Highway ? 5000 : 10000)) {
      const auto out = env.step(action_from_index(rng.index(kActionCount)));
      const auto& r = out.reward;
      ++steps;
      if (r.total != weighted_total(cfg.weights, r.safety, r.comfort, r.efficiency)) ++mismatches;
      if (r.safety < -1 || r.safety > 0 || r.comfort < -2 || r.comfort > 0 || r.efficiency < 0 || r.efficiency > 1)
        ++out_of_range;
      if (out.terminated || out.truncated) env.reset(rng.next_u64());
    }
  }
  return {mismatches == 0 && out_of_range == 0,
          fmt("%d steps over both scenarios, %d total mismatches, %d components out of range", steps, mismatches,
              out_of_range)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_runs");
  fs::remove_all(root);
  fs::create_directories(root);

  int failures = 0;
  auto report = [&](int n, const char* name, const Verdict& v) {
    std::printf("[PRIMARY] criterion %d %s: %s (%s)\n", n, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
  };

  report(1, "gradient correctness", gradient_correctness());
  report(2, "advantage estimation", gae_equivalence());
  report(3, "clip identities", clip_identities());
  report(4, "tabular oracle", tabular_oracle());

  const auto t0 = std::chrono::steady_clock::now();
  const auto runs = train_all(root);
  std::printf("  training runs took %.0f s\n", seconds_since(t0));
  report(5, "learning signal", learning_signal(runs));
  report(6, "superiority claim", superiority(runs));
  report(7, "fault log", fault_properties(runs));
  report(8, "determinism", determinism(root));
  report(9, "reward decomposition", reward_decomposition());

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
