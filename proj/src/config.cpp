#include "hrl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hrl/errors.hpp"

namespace hrl {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ConfigError("expected a finite number, got '" + s + "'", line);
  return v;
}

std::uint64_t parse_u64(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected a non-negative integer, got '" + s + "'", line);
  return v;
}

int parse_int(const std::string& s, std::size_t line) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected an integer, got '" + s + "'", line);
  return v;
}

bool parse_bool(const std::string& s, std::size_t line) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected true or false, got '" + s + "'", line);
}

Activation parse_activation(const std::string& s, std::size_t line) {
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  throw ConfigError("expected relu or tanh, got '" + s + "'", line);
}

std::string activation_name(Activation a) { return a == Activation::ReLU ? "relu" : "tanh"; }

std::vector<std::size_t> parse_sizes(const std::string& s, std::size_t line) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) out.push_back(static_cast<std::size_t>(parse_u64(item, line)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& items, const std::function<std::string(const T&)>& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += fmt(items[i]);
  }
  return out;
}

struct Binding {
  std::string section;
  std::string key;
  std::string doc;
  std::function<void(ExperimentConfig&, const std::string&, std::size_t)> set;
  std::function<std::string(const ExperimentConfig&)> get;

  std::string name() const { return section + "." + key; }
};

template <typename Member>
Binding number(std::string section, std::string key, std::string doc, Member member) {
  return {std::move(section), std::move(key), std::move(doc),
          [member](ExperimentConfig& c, const std::string& v, std::size_t line) {
            auto& field = member(c);
            using Field = std::remove_reference_t<decltype(field)>;
            if constexpr (std::is_same_v<Field, double>) {
              field = parse_double(v, line);
            } else if constexpr (std::is_same_v<Field, int>) {
              field = parse_int(v, line);
            } else if constexpr (std::is_same_v<Field, bool>) {
              field = parse_bool(v, line);
            } else {
              field = static_cast<Field>(parse_u64(v, line));
            }
          },
          [member](const ExperimentConfig& c) {
            auto& field = member(const_cast<ExperimentConfig&>(c));
            using Field = std::remove_reference_t<decltype(field)>;
            if constexpr (std::is_same_v<Field, double>) {
              return format_double(field);
            } else if constexpr (std::is_same_v<Field, bool>) {
              return std::string(field ? "true" : "false");
            } else {
              return std::to_string(field);
            }
          }};
}

#define HRL_FIELD(expr) [](ExperimentConfig& c) -> auto& { return expr; }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> all = [] {
    std::vector<Binding> b;
    b.push_back({"experiment", "agent", "agent to train or evaluate: dqn, ppo, rules, random",
                 [](ExperimentConfig& c, const std::string& v, std::size_t line) {
                   try {
                     c.agent = parse_agent(v);
                   } catch (const ConfigError& e) {
                     throw ConfigError(e.what(), line);
                   }
                 },
                 [](const ExperimentConfig& c) { return std::string(to_string(c.agent)); }});
    b.push_back({"experiment", "scenario", "road layout: highway or merge",
                 [](ExperimentConfig& c, const std::string& v, std::size_t line) {
                   if (v == "highway") c.env.road.scenario = Scenario::Highway;
                   else if (v == "merge") c.env.road.scenario = Scenario::Merge;
                   else throw ConfigError("expected highway or merge, got '" + v + "'", line);
                 },
                 [](const ExperimentConfig& c) { return std::string(to_string(c.env.road.scenario)); }});
    b.push_back({"experiment", "seeds", "comma-separated run seeds; one training run per seed",
                 [](ExperimentConfig& c, const std::string& v, std::size_t line) {
                   c.seeds.clear();
                   for (const auto& item : split_list(v)) c.seeds.push_back(parse_u64(item, line));
                 },
                 [](const ExperimentConfig& c) {
                   return join<std::uint64_t>(c.seeds, [](const std::uint64_t& s) { return std::to_string(s); });
                 }});
    b.push_back(number("experiment", "total_env_steps", "environment steps per training run", HRL_FIELD(c.total_env_steps)));
    b.push_back(number("experiment", "eval_every", "environment steps between greedy evaluations (0 disables)", HRL_FIELD(c.eval_every)));
    b.push_back(number("experiment", "eval_episodes", "episodes per evaluation", HRL_FIELD(c.eval_episodes)));
    b.push_back(number("experiment", "moving_window", "episodes in the logged moving return statistics", HRL_FIELD(c.moving_window)));

    b.push_back(number("env", "lane_count", "number of lanes including the merge ramp", HRL_FIELD(c.env.road.lane_count)));
    b.push_back(number("env", "lane_width", "lane width, m", HRL_FIELD(c.env.road.lane_width)));
    b.push_back(number("env", "road_length", "modelled road length, m", HRL_FIELD(c.env.road.road_length)));
    b.push_back(number("env", "merge_ramp_end_x", "x where the merge ramp ends, m", HRL_FIELD(c.env.road.merge_ramp_end_x)));
    b.push_back(number("env", "traffic_count", "traffic vehicles per episode", HRL_FIELD(c.env.traffic_count)));
    b.push_back(number("env", "horizon", "decision steps per episode", HRL_FIELD(c.env.horizon)));
    b.push_back(number("env", "substeps", "integration sub-steps per decision", HRL_FIELD(c.env.substeps)));
    b.push_back(number("env", "dt", "sub-step length, s", HRL_FIELD(c.env.dt)));
    b.push_back(number("env", "kp", "speed tracking gain, 1/s", HRL_FIELD(c.env.kp)));
    b.push_back(number("env", "a_max", "acceleration limit, m/s^2", HRL_FIELD(c.env.a_max)));
    b.push_back(number("env", "lateral_rate", "lane change lateral speed, m/s", HRL_FIELD(c.env.lateral_rate)));
    b.push_back(number("env", "max_speed", "hard speed cap for all vehicles, m/s", HRL_FIELD(c.env.max_speed)));
    b.push_back(number("env", "ego_initial_speed", "ego speed at reset, m/s", HRL_FIELD(c.env.ego_initial_speed)));
    b.push_back(number("env", "target_speed_step", "target speed change per faster/slower, m/s", HRL_FIELD(c.env.target_speed_step)));
    b.push_back(number("env", "target_speed_min", "lowest ego target speed, m/s", HRL_FIELD(c.env.target_speed_min)));
    b.push_back(number("env", "target_speed_max", "highest ego target speed, m/s", HRL_FIELD(c.env.target_speed_max)));
    b.push_back(number("env", "traffic_speed_min", "lowest traffic spawn speed, m/s", HRL_FIELD(c.env.traffic_speed_min)));
    b.push_back(number("env", "traffic_speed_max", "highest traffic spawn speed, m/s", HRL_FIELD(c.env.traffic_speed_max)));
    b.push_back(number("env", "traffic_spawn_behind", "traffic spawns no further than this behind x=0, m", HRL_FIELD(c.env.traffic_spawn_behind)));
    b.push_back(number("env", "traffic_spawn_ahead", "traffic spawns no further than this ahead of x=0, m", HRL_FIELD(c.env.traffic_spawn_ahead)));
    b.push_back(number("env", "spawn_spacing", "min same-lane distance between spawned vehicles, m", HRL_FIELD(c.env.spawn_spacing)));
    b.push_back(number("env", "ghr_lookahead", "traffic ignores leaders farther than this, m", HRL_FIELD(c.env.ghr_lookahead)));
    b.push_back(number("env", "ghr_c", "GHR gain c", HRL_FIELD(c.env.ghr.c)));
    b.push_back(number("env", "ghr_m", "GHR speed exponent m", HRL_FIELD(c.env.ghr.m)));
    b.push_back(number("env", "ghr_l", "GHR spacing exponent l", HRL_FIELD(c.env.ghr.l)));
    b.push_back(number("env", "ghr_tau", "GHR reaction delay, s", HRL_FIELD(c.env.ghr.tau)));
    b.push_back(number("env", "obs_x_range", "observation x normalization range, m", HRL_FIELD(c.env.scale.x_range)));
    b.push_back(number("env", "obs_y_range", "observation y normalization range, m", HRL_FIELD(c.env.scale.y_range)));
    b.push_back(number("env", "obs_v_range", "observation speed normalization range, m/s", HRL_FIELD(c.env.scale.v_range)));

    b.push_back(number("reward", "w_safety", "weight of the safety term", HRL_FIELD(c.env.weights.safety)));
    b.push_back(number("reward", "w_comfort", "weight of the comfort term", HRL_FIELD(c.env.weights.comfort)));
    b.push_back(number("reward", "w_efficiency", "weight of the efficiency term", HRL_FIELD(c.env.weights.efficiency)));
    b.push_back(number("reward", "tau_safe", "safe time headway, s", HRL_FIELD(c.env.reward.tau_safe)));
    b.push_back(number("reward", "a_max", "acceleration that earns the full comfort penalty, m/s^2", HRL_FIELD(c.env.reward.a_max)));
    b.push_back(number("reward", "kappa_lane_change", "penalty per initiated lane change", HRL_FIELD(c.env.reward.kappa_lane_change)));
    b.push_back(number("reward", "v_min", "speed with zero efficiency reward, m/s", HRL_FIELD(c.env.reward.v_min)));
    b.push_back(number("reward", "v_max", "speed with full efficiency reward, m/s", HRL_FIELD(c.env.reward.v_max)));

    b.push_back(number("dqn", "gamma", "discount factor", HRL_FIELD(c.dqn.gamma)));
    b.push_back(number("dqn", "learning_rate", "Adam learning rate", HRL_FIELD(c.dqn.learning_rate)));
    b.push_back(number("dqn", "batch_size", "replay minibatch size", HRL_FIELD(c.dqn.batch_size)));
    b.push_back(number("dqn", "replay_capacity", "replay buffer capacity", HRL_FIELD(c.dqn.replay_capacity)));
    b.push_back(number("dqn", "target_sync_every", "gradient steps between target network copies", HRL_FIELD(c.dqn.target_sync_every)));
    b.push_back(number("dqn", "epsilon_start", "initial exploration rate", HRL_FIELD(c.dqn.epsilon_start)));
    b.push_back(number("dqn", "epsilon_end", "final exploration rate", HRL_FIELD(c.dqn.epsilon_end)));
    b.push_back(number("dqn", "epsilon_decay_steps", "environment steps of linear epsilon decay", HRL_FIELD(c.dqn.epsilon_decay_steps)));
    b.push_back(number("dqn", "learn_start", "transitions collected before training", HRL_FIELD(c.dqn.learn_start)));
    b.push_back({"dqn", "hidden_layers", "comma-separated hidden layer widths",
                 [](ExperimentConfig& c, const std::string& v, std::size_t line) { c.dqn.hidden_layers = parse_sizes(v, line); },
                 [](const ExperimentConfig& c) {
                   return join<std::size_t>(c.dqn.hidden_layers, [](const std::size_t& n) { return std::to_string(n); });
                 }});
    b.push_back({"dqn", "activation", "hidden activation: relu or tanh",
                 [](ExperimentConfig& c, const std::string& v, std::size_t line) { c.dqn.activation = parse_activation(v, line); },
                 [](const ExperimentConfig& c) { return activation_name(c.dqn.activation); }});

    b.push_back(number("ppo", "clip_epsilon", "surrogate clipping range", HRL_FIELD(c.ppo.clip_epsilon)));
    b.push_back(number("ppo", "gae_lambda", "GAE lambda", HRL_FIELD(c.ppo.gae_lambda)));
    b.push_back(number("ppo", "gamma", "discount factor", HRL_FIELD(c.ppo.gamma)));
    b.push_back(number("ppo", "rollout_length", "environment steps per rollout", HRL_FIELD(c.ppo.rollout_length)));
    b.push_back(number("ppo", "epochs", "passes over each rollout", HRL_FIELD(c.ppo.epochs)));
    b.push_back(number("ppo", "minibatch_size", "samples per optimizer step", HRL_FIELD(c.ppo.minibatch_size)));
    b.push_back(number("ppo", "policy_lr", "policy Adam learning rate", HRL_FIELD(c.ppo.policy_lr)));
    b.push_back(number("ppo", "value_lr", "value Adam learning rate", HRL_FIELD(c.ppo.value_lr)));
    b.push_back(number("ppo", "entropy_coef", "entropy bonus weight (0 disables)", HRL_FIELD(c.ppo.entropy_coef)));
    b.push_back(number("ppo", "normalize_advantages", "normalize advantages per rollout", HRL_FIELD(c.ppo.normalize_advantages)));
    b.push_back({"ppo", "hidden_layers", "comma-separated hidden layer widths of both networks",
                 [](ExperimentConfig& c, const std::string& v, std::size_t line) { c.ppo.hidden_layers = parse_sizes(v, line); },
                 [](const ExperimentConfig& c) {
                   return join<std::size_t>(c.ppo.hidden_layers, [](const std::size_t& n) { return std::to_string(n); });
                 }});
    b.push_back({"ppo", "activation", "hidden activation: relu or tanh",
                 [](ExperimentConfig& c, const std::string& v, std::size_t line) { c.ppo.activation = parse_activation(v, line); },
                 [](const ExperimentConfig& c) { return activation_name(c.ppo.activation); }});

    b.push_back(number("rules", "headway_change_trigger", "leader headway that arms a lane change, s", HRL_FIELD(c.rules.headway_change_trigger)));
    b.push_back(number("rules", "gap_accept_front", "min front gap in the target lane, m", HRL_FIELD(c.rules.gap_accept_front)));
    b.push_back(number("rules", "gap_accept_rear", "min rear gap in the target lane, m", HRL_FIELD(c.rules.gap_accept_rear)));
    b.push_back(number("rules", "speed_advantage_min", "required target-lane speed gain, m/s", HRL_FIELD(c.rules.speed_advantage_min)));

    b.push_back({"compare", "agents", "agents evaluated by compare, comma-separated",
                 [](ExperimentConfig& c, const std::string& v, std::size_t line) {
                   c.compare_agents.clear();
                   for (const auto& item : split_list(v)) {
                     try {
                       c.compare_agents.push_back(parse_agent(item));
                     } catch (const ConfigError& e) {
                       throw ConfigError(e.what(), line);
                     }
                   }
                 },
                 [](const ExperimentConfig& c) {
                   return join<AgentKind>(c.compare_agents, [](const AgentKind& a) { return std::string(to_string(a)); });
                 }});
    b.push_back({"compare", "dqn_checkpoint", "DQN checkpoint used by compare",
                 [](ExperimentConfig& c, const std::string& v, std::size_t) { c.dqn_checkpoint = v; },
                 [](const ExperimentConfig& c) { return c.dqn_checkpoint; }});
    b.push_back({"compare", "ppo_checkpoint", "PPO checkpoint used by compare",
                 [](ExperimentConfig& c, const std::string& v, std::size_t) { c.ppo_checkpoint = v; },
                 [](const ExperimentConfig& c) { return c.ppo_checkpoint; }});
    return b;
  }();
  return all;
}

#undef HRL_FIELD

}  // namespace

std::string_view to_string(AgentKind a) {
  switch (a) {
    case AgentKind::Dqn: return "dqn";
    case AgentKind::Ppo: return "ppo";
    case AgentKind::Rules: return "rules";
    case AgentKind::Random: return "random";
  }
  return "unknown";
}

AgentKind parse_agent(std::string_view name) {
  if (name == "dqn") return AgentKind::Dqn;
  if (name == "ppo") return AgentKind::Ppo;
  if (name == "rules") return AgentKind::Rules;
  if (name == "random") return AgentKind::Random;
  throw ConfigError("unknown agent '" + std::string(name) + "' (expected dqn, ppo, rules or random)");
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  if (moving_window == 0) throw ConfigError("experiment.moving_window must be > 0");
  if (eval_every > 0 && eval_episodes == 0) throw ConfigError("experiment.eval_episodes must be > 0 when evaluating");
  env.validate();
  dqn.validate();
  ppo.validate();
  rules.validate();
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::map<std::string, std::size_t> seen;  // section.key -> line
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  const auto& all = bindings();
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header", line_no);
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      const bool known = std::any_of(all.begin(), all.end(), [&](const Binding& b) { return b.section == section; });
      if (!known) throw ConfigError("unknown section [" + section + "]", line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    if (section.empty()) throw ConfigError("key outside of any section", line_no);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = std::find_if(all.begin(), all.end(),
                                 [&](const Binding& b) { return b.section == section && b.key == key; });
    if (it == all.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line_no);
    if (!seen.emplace(it->name(), line_no).second)
      throw ConfigError("duplicate key '" + it->name() + "'", line_no);
    it->set(config, value, line_no);
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    // Point at the line of the first key named in the message, if it was set in the file.
    const std::string msg = e.what();
    for (const auto& [name, line] : seen) {
      if (msg.find(name) != std::string::npos) throw ConfigError(msg, line);
    }
    throw;
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what(), e.line());
  }
}

std::string render_config(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& b : bindings()) {
    const std::string value = b.get(config);
    if (value.empty()) continue;
    if (b.section != section) {
      if (!section.empty()) out += "\n";
      section = b.section;
      out += "[" + section + "]\n";
    }
    out += b.key + " = " + value + "\n";
  }
  return out;
}

std::string config_reference() {
  const ExperimentConfig defaults;
  std::string out;
  for (const auto& b : bindings()) {
    std::string def = b.get(defaults);
    if (def.empty()) def = "(unset)";
    out += "  " + b.name() + " = " + def + "\n      " + b.doc + "\n";
  }
  return out;
}

}  // namespace hrl
