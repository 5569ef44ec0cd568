#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hrl/checkpoint.hpp"
#include "hrl/episodic_env.hpp"
#include "hrl/mlp.hpp"
#include "hrl/rng.hpp"

namespace hrl {

struct PpoConfig {
  double clip_epsilon = 0.2;
  double gae_lambda = 0.95;
  double gamma = 0.99;
  std::size_t rollout_length = 2048;
  std::size_t epochs = 10;
  std::size_t minibatch_size = 256;
  double policy_lr = 3e-4;
  double value_lr = 1e-3;
  double entropy_coef = 0.01;
  bool normalize_advantages = true;
  std::vector<std::size_t> hidden_layers{128, 128};
  Activation activation = Activation::Tanh;

  void validate() const;
  NetworkSpec policy_network(std::size_t observation_size, std::size_t action_count) const;
  NetworkSpec value_network(std::size_t observation_size) const;
};

/// One on-policy rollout as parallel series. Episodes that end inside the
/// rollout are marked in `episode_ends`; `dones` marks the absorbing ones.
struct RolloutBatch {
  std::size_t observation_size = 0;
  std::vector<double> observations;  ///< row-major, one row per step
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> values;     ///< V(s_t) under the collecting value network
  std::vector<double> log_probs;  ///< log pi_old(a_t | s_t), frozen at collection
  std::vector<bool> dones;
  std::vector<bool> episode_ends;
  /// V(s_{t+1}) where the episode was truncated at t, 0 elsewhere.
  std::vector<double> bootstrap_values;
  /// V of the observation after the last record when its episode continues.
  double last_value = 0.0;

  std::vector<double> advantages;
  std::vector<double> value_targets;

  std::size_t size() const { return actions.size(); }
  std::span<const double> observation(std::size_t t) const {
    return {observations.data() + t * observation_size, observation_size};
  }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> value_targets;  ///< raw advantage + V(s_t), before any normalization
};

/// Backward recursion delta_t = r_t + gamma V(s_{t+1}) - V(s_t),
/// A_t = delta_t + gamma lambda A_{t+1}, restarted at every episode end.
/// Advantages are normalized to zero mean and unit deviation when `normalize`.
GaeResult compute_gae(const RolloutBatch& batch, double gamma, double lambda, bool normalize);

void normalize_in_place(std::vector<double>& values);

/// min(rho A, clip(rho, 1 - eps, 1 + eps) A)
double clipped_surrogate(double ratio, double advantage, double clip_epsilon);

/// Whether the clipped branch is the active (gradient-free) one.
bool clip_active(double ratio, double advantage, double clip_epsilon);

struct PolicyObjective {
  double objective = 0.0;  ///< mean surrogate + entropy_coef * mean entropy
  double surrogate = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  std::vector<double> gradient;  ///< ascent direction of `objective`
};

PolicyObjective ppo_objective(const RolloutBatch& batch, std::span<const std::size_t> indices,
                              const NetworkSpec& policy_spec, std::span<const double> policy_params,
                              double clip_epsilon, double entropy_coef);

struct ValueLoss {
  double loss = 0.0;
  std::vector<double> gradient;  ///< descent direction
};

ValueLoss value_loss(const RolloutBatch& batch, std::span<const std::size_t> indices,
                     const NetworkSpec& value_spec, std::span<const double> value_params);

struct PpoUpdateMetrics {
  double policy_objective = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
  std::size_t minibatches = 0;
};

/// Separate policy and value networks with their own Adam states.
class PpoLearner {
 public:
  PpoLearner(NetworkSpec policy_spec, NetworkSpec value_spec, PpoConfig config, std::uint64_t seed);

  /// Acts by sampling the current policy for `length` steps (0 means the
  /// configured rollout length), resetting the environment at episode ends.
  /// The environment state carries over between rollouts.
  RolloutBatch collect_rollout(EpisodicEnv& env, std::size_t length = 0);

  /// Fills batch.advantages and batch.value_targets from the config.
  void compute_advantages(RolloutBatch& batch) const;

  /// `epochs` passes over the batch in shuffled minibatches.
  PpoUpdateMetrics update(const RolloutBatch& batch);

  std::size_t act_greedy(std::span<const double> observation) const;
  std::size_t act_sample(std::span<const double> observation);
  std::vector<double> action_probabilities(std::span<const double> observation) const;
  double value(std::span<const double> observation) const;

  const PpoConfig& config() const { return config_; }
  const NetworkSpec& policy_spec() const { return policy_spec_; }
  const NetworkSpec& value_spec() const { return value_spec_; }
  const ParameterSet& policy_params() const { return policy_; }
  const ParameterSet& value_params() const { return value_; }
  ParameterSet& mutable_policy_params() { return policy_; }
  ParameterSet& mutable_value_params() { return value_; }
  std::uint64_t updates() const { return updates_; }

  Checkpoint to_checkpoint() const;
  static PpoLearner from_checkpoint(const Checkpoint& checkpoint, PpoConfig config, std::uint64_t seed);

 private:
  NetworkSpec policy_spec_;
  NetworkSpec value_spec_;
  PpoConfig config_;
  ParameterSet policy_;
  ParameterSet value_;
  AdamState policy_adam_;
  AdamState value_adam_;
  Rng action_rng_;
  Rng shuffle_rng_;
  std::vector<double> current_obs_;
  bool needs_reset_ = true;
  std::uint64_t updates_ = 0;
};

}  // namespace hrl
