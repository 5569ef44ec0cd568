#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hrl/checkpoint.hpp"
#include "hrl/mlp.hpp"
#include "hrl/rng.hpp"

namespace hrl {

struct Transition {
  std::vector<double> s;
  std::size_t a = 0;
  double r = 0.0;
  std::vector<double> s_next;
  bool done = false;  ///< true only for absorbing ends, never for time-limit truncation
};

/// Fixed-capacity ring of transitions; oldest entries are overwritten first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return slots_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  const Transition& at(std::size_t slot) const { return slots_.at(slot); }

  /// Uniform with replacement over the current contents.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> slots_;
  std::size_t next_ = 0;
  std::uint64_t inserted_ = 0;
};

struct DqnConfig {
  double gamma = 0.99;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t replay_capacity = 50000;
  std::uint64_t target_sync_every = 1000;  ///< gradient steps between hard target copies
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::uint64_t epsilon_decay_steps = 10000;  ///< environment steps
  std::size_t learn_start = 1000;             ///< transitions stored before training starts
  std::vector<std::size_t> hidden_layers{128, 128};
  Activation activation = Activation::ReLU;

  void validate() const;
  /// Linear decay from epsilon_start to epsilon_end, then constant.
  double epsilon_at(std::uint64_t env_steps) const;
  NetworkSpec network(std::size_t observation_size, std::size_t action_count) const;
};

std::size_t argmax(std::span<const double> values);

/// Epsilon-greedy choice. Greedy ties go to the lowest index. The stream is
/// advanced by one draw, plus one more when exploring.
std::size_t select_action(std::span<const double> q_values, double epsilon, Rng& rng);

/// Bellman targets y_i = r_i + (1 - done_i) * gamma * max_a' Q(s'_i, a'; target).
std::vector<double> compute_targets(std::span<const Transition* const> batch, const NetworkSpec& spec,
                                    std::span<const double> target_params, double gamma);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Mean squared TD error over the batch and its gradient. Targets are constants.
LossGradient loss_and_gradient(std::span<const Transition* const> batch, const NetworkSpec& spec,
                               std::span<const double> params, std::span<const double> targets);

struct DqnTrainMetrics {
  bool skipped = true;
  double loss = 0.0;
  double epsilon = 0.0;
  std::size_t buffer_size = 0;
  bool target_synced = false;
};

/// Online network, target network, optimizer and replay buffer of one learner.
class DqnLearner {
 public:
  DqnLearner(NetworkSpec spec, DqnConfig config, std::uint64_t seed);

  /// Epsilon-greedy at the current schedule value.
  std::size_t act(std::span<const double> observation);
  std::size_t act_greedy(std::span<const double> observation) const;
  std::vector<double> q_values(std::span<const double> observation) const;

  /// Stores a transition and counts one environment step.
  void observe(Transition t);
  /// One optimizer step on a sampled batch; a no-op before learn_start.
  DqnTrainMetrics train_step();

  double epsilon() const { return config_.epsilon_at(env_steps_); }
  const NetworkSpec& spec() const { return spec_; }
  const DqnConfig& config() const { return config_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& mutable_params() { return params_; }
  const ParameterSet& target_params() const { return target_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const AdamState& optimizer() const { return adam_; }
  std::uint64_t env_steps() const { return env_steps_; }
  std::uint64_t gradient_steps() const { return grad_steps_; }

  Checkpoint to_checkpoint() const;
  /// Restores networks, optimizer and counters. The replay buffer starts empty.
  static DqnLearner from_checkpoint(const Checkpoint& checkpoint, DqnConfig config, std::uint64_t seed);

 private:
  NetworkSpec spec_;
  DqnConfig config_;
  ParameterSet params_;
  ParameterSet target_;
  AdamState adam_;
  ReplayBuffer buffer_;
  Rng action_rng_;
  Rng replay_rng_;
  std::uint64_t env_steps_ = 0;
  std::uint64_t grad_steps_ = 0;
};

}  // namespace hrl
