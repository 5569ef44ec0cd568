// Command line front end: train, eval, rollout and compare.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "hrl/config.hpp"
#include "hrl/errors.hpp"
#include "hrl/harness.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kDivergence = 4, kCheckpoint = 5 };

std::optional<std::filesystem::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Highway decision making with DQN, PPO and a rule-based baseline"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 2 config error, 3 I/O error, 4 training diverged, 5 checkpoint error, 1 other.\n\n"
      "Config file keys ([section] then key = value; unknown keys are errors):\n" +
      hrl::config_reference());

  std::string config_path, out_dir, checkpoint;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "train the configured agent once per seed; writes <out>/seed_<n>/");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--out", out_dir, "output directory")->default_val("out");

  auto* eval = app.add_subcommand("eval", "evaluate a policy; writes summary.json and episodes.csv");
  eval->add_option("--config", config_path, "config file")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint (not needed for rules/random)");
  eval->add_option("--out", out_dir, "output directory")->default_val("out/eval");

  auto* rollout = app.add_subcommand("rollout", "export the per-step trajectory of one episode as CSV");
  rollout->add_option("--config", config_path, "config file")->required();
  rollout->add_option("--checkpoint", checkpoint, "checkpoint (not needed for rules/random)");
  rollout->add_option("--seed", seed, "episode seed (the env_seed column of episodes.csv)")->required();
  rollout->add_option("--out", out_dir, "output CSV path")->default_val("out/trajectory.csv");

  auto* cmp = app.add_subcommand("compare", "evaluate every [compare] agent on the same episodes");
  cmp->add_option("--config", config_path, "config file")->required();
  cmp->add_option("--out", out_dir, "output CSV path")->default_val("out/compare.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    const hrl::ExperimentConfig config = hrl::load_config(config_path);
    if (*train) {
      for (const auto s : config.seeds) {
        const auto dir = std::filesystem::path(out_dir) / ("seed_" + std::to_string(s));
        const auto result = hrl::run_train(config, s, dir);
        std::printf("seed %llu: %zu episodes, %llu faults, checkpoint %s\n", static_cast<unsigned long long>(s),
                    result.episodes.size(),
                    static_cast<unsigned long long>(result.faults.size() ? result.faults.count.back() : 0),
                    result.checkpoint.string().c_str());
      }
    } else if (*eval) {
      const auto s = hrl::run_eval(config, optional_path(checkpoint), out_dir);
      std::printf("%s: %zu episodes, return %.4f +- %.4f, collision rate %.3f, mean speed %.2f m/s\n",
                  std::string(hrl::to_string(config.agent)).c_str(), s.episodes, s.mean_return, s.std_return,
                  s.collision_rate, s.mean_speed);
    } else if (*rollout) {
      const auto m = hrl::export_trajectory(config, optional_path(checkpoint), seed, out_dir);
      std::printf("%d steps, return %.4f, written to %s\n", m.length, m.return_, out_dir.c_str());
    } else if (*cmp) {
      const auto rows = hrl::compare(config, out_dir);
      hrl::print_compare_table(rows, std::cout);
      for (const auto& r : rows)
        if (!r.summary) return kCheckpoint;
    }
  } catch (const hrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const hrl::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const hrl::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const hrl::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
