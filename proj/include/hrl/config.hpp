#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hrl/dqn.hpp"
#include "hrl/env.hpp"
#include "hrl/ppo.hpp"
#include "hrl/rules.hpp"

namespace hrl {

enum class AgentKind { Dqn, Ppo, Rules, Random };

std::string_view to_string(AgentKind a);
AgentKind parse_agent(std::string_view name);

struct ExperimentConfig {
  AgentKind agent = AgentKind::Dqn;
  std::vector<std::uint64_t> seeds{1};
  std::uint64_t total_env_steps = 50000;
  std::uint64_t eval_every = 5000;
  std::uint64_t eval_episodes = 10;
  std::size_t moving_window = 100;

  EnvConfig env;
  DqnConfig dqn;
  PpoConfig ppo;
  RuleParams rules;

  std::vector<AgentKind> compare_agents{AgentKind::Dqn, AgentKind::Ppo, AgentKind::Rules, AgentKind::Random};
  std::string dqn_checkpoint;
  std::string ppo_checkpoint;

  void validate() const;
};

/// Parses the sectioned `key = value` format:
///
///   # comment
///   [experiment]
///   agent = ppo
///   seeds = 1, 2, 3
///
/// Unknown sections or keys, malformed values and violated invariants are
/// reported as ConfigError with the offending line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Renders a config back into the file format; parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& config);

/// One line per key: section.key, default and description.
std::string config_reference();

}  // namespace hrl
