#include "hrl/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hrl/errors.hpp"

namespace hrl {

namespace {

RowMatrix stack(std::span<const Transition* const> batch, bool next, std::size_t width) {
  RowMatrix m(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& src = next ? batch[i]->s_next : batch[i]->s;
    if (src.size() != width) throw std::invalid_argument("transition observation has wrong length");
    std::copy(src.begin(), src.end(), m.row(static_cast<Eigen::Index>(i)).data());
  }
  return m;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be > 0");
  slots_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (!std::isfinite(t.r)) throw DivergenceError("non-finite reward pushed to replay");
  if (slots_.size() < capacity_) {
    slots_.push_back(std::move(t));
  } else {
    slots_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
  ++inserted_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (slots_.empty()) throw ContractViolation("sampling an empty replay buffer");
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.index(slots_.size()));
  return idx;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<const Transition*> out;
  out.reserve(n);
  for (auto i : sample_indices(n, rng)) out.push_back(&slots_[i]);
  return out;
}

void DqnConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("dqn.gamma must be in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("dqn.learning_rate must be > 0");
  if (batch_size == 0) throw ConfigError("dqn.batch_size must be > 0");
  if (replay_capacity == 0) throw ConfigError("dqn.replay_capacity must be > 0");
  if (batch_size > replay_capacity) throw ConfigError("dqn.batch_size must not exceed replay_capacity");
  if (target_sync_every == 0) throw ConfigError("dqn.target_sync_every must be > 0");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
    throw ConfigError("dqn epsilon values must be in [0, 1]");
  for (auto h : hidden_layers) {
    if (h == 0) throw ConfigError("dqn.hidden_layers entries must be > 0");
  }
}

double DqnConfig::epsilon_at(std::uint64_t env_steps) const {
  if (epsilon_decay_steps == 0 || env_steps >= epsilon_decay_steps) return epsilon_end;
  const double frac = static_cast<double>(env_steps) / static_cast<double>(epsilon_decay_steps);
  return std::clamp(epsilon_start + (epsilon_end - epsilon_start) * frac, 0.0, 1.0);
}

NetworkSpec DqnConfig::network(std::size_t observation_size, std::size_t action_count) const {
  NetworkSpec spec;
  spec.layer_sizes.push_back(observation_size);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden_layers.begin(), hidden_layers.end());
  spec.layer_sizes.push_back(action_count);
  spec.activation = activation;
  return spec;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t select_action(std::span<const double> q_values, double epsilon, Rng& rng) {
  if (q_values.empty()) throw std::invalid_argument("no actions to select from");
  if (rng.uniform() < epsilon) return static_cast<std::size_t>(rng.index(q_values.size()));
  return argmax(q_values);
}

std::vector<double> compute_targets(std::span<const Transition* const> batch, const NetworkSpec& spec,
                                    std::span<const double> target_params, double gamma) {
  if (batch.empty()) throw std::invalid_argument("compute_targets needs a non-empty batch");
  const RowMatrix next_q = forward_batch(spec, target_params, stack(batch, true, spec.input_size()));
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = next_q.row(static_cast<Eigen::Index>(i));
    if (!row.allFinite()) throw DivergenceError("non-finite target-network Q value");
    const double bootstrap = batch[i]->done ? 0.0 : gamma * row.maxCoeff();
    y[i] = batch[i]->r + bootstrap;
  }
  return y;
}

LossGradient loss_and_gradient(std::span<const Transition* const> batch, const NetworkSpec& spec,
                               std::span<const double> params, std::span<const double> targets) {
  if (batch.empty() || targets.size() != batch.size())
    throw std::invalid_argument("loss_and_gradient needs one target per transition");
  ForwardCache cache;
  const RowMatrix q = forward_batch(spec, params, stack(batch, false, spec.input_size()), &cache);
  RowMatrix out_grad = RowMatrix::Zero(q.rows(), q.cols());
  const double n = static_cast<double>(batch.size());
  LossGradient result;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto a = static_cast<Eigen::Index>(batch[i]->a);
    if (a >= q.cols()) throw std::invalid_argument("transition action out of range");
    const double err = targets[i] - q(static_cast<Eigen::Index>(i), a);
    result.loss += err * err / n;
    out_grad(static_cast<Eigen::Index>(i), a) = -2.0 * err / n;
  }
  if (!std::isfinite(result.loss)) throw DivergenceError("non-finite DQN loss");
  result.gradient.assign(params.size(), 0.0);
  backward_batch(spec, params, cache, out_grad, result.gradient);
  return result;
}

DqnLearner::DqnLearner(NetworkSpec spec, DqnConfig config, std::uint64_t seed)
    : spec_(std::move(spec)),
      config_(std::move(config)),
      params_(init_parameters(spec_, mix_seed(seed, 1))),
      target_(params_),
      adam_(spec_.parameter_count(), config_.learning_rate),
      buffer_(config_.replay_capacity),
      action_rng_(mix_seed(seed, 2)),
      replay_rng_(mix_seed(seed, 3)) {
  config_.validate();
}

std::vector<double> DqnLearner::q_values(std::span<const double> observation) const {
  return forward(spec_, params_.values, observation);
}

std::size_t DqnLearner::act(std::span<const double> observation) {
  return select_action(q_values(observation), epsilon(), action_rng_);
}

std::size_t DqnLearner::act_greedy(std::span<const double> observation) const {
  return argmax(q_values(observation));
}

void DqnLearner::observe(Transition t) {
  buffer_.push(std::move(t));
  ++env_steps_;
}

DqnTrainMetrics DqnLearner::train_step() {
  DqnTrainMetrics m;
  m.epsilon = epsilon();
  m.buffer_size = buffer_.size();
  if (buffer_.size() < std::max<std::size_t>(config_.learn_start, 1)) return m;

  const auto batch = buffer_.sample(config_.batch_size, replay_rng_);
  const auto y = compute_targets(batch, spec_, target_.values, config_.gamma);
  const auto lg = loss_and_gradient(batch, spec_, params_.values, y);
  adam_step(adam_, params_.values, lg.gradient);
  ++grad_steps_;
  if (grad_steps_ % config_.target_sync_every == 0) {
    target_ = params_;
    m.target_synced = true;
  }
  m.skipped = false;
  m.loss = lg.loss;
  return m;
}

Checkpoint DqnLearner::to_checkpoint() const {
  Checkpoint cp;
  cp.agent = "dqn";
  cp.records.push_back({"q", spec_, params_});
  cp.records.push_back({"q_target", spec_, target_});
  cp.records.push_back({"adam_m", spec_, ParameterSet{adam_.m}});
  cp.records.push_back({"adam_v", spec_, ParameterSet{adam_.v}});
  cp.counters = {{"adam_t", adam_.t}, {"env_steps", env_steps_}, {"gradient_steps", grad_steps_}};
  return cp;
}

DqnLearner DqnLearner::from_checkpoint(const Checkpoint& checkpoint, DqnConfig config, std::uint64_t seed) {
  if (checkpoint.agent != "dqn")
    throw CheckpointError(CheckpointError::Kind::Mismatch, "checkpoint is for agent '" + checkpoint.agent + "', not dqn");
  const auto& q = checkpoint.record("q");
  DqnLearner learner(q.spec, std::move(config), seed);
  learner.params_ = q.params;
  learner.target_ = checkpoint.record("q_target").params;
  learner.adam_.m = checkpoint.record("adam_m").params.values;
  learner.adam_.v = checkpoint.record("adam_v").params.values;
  learner.adam_.t = checkpoint.counter("adam_t");
  learner.env_steps_ = checkpoint.counter("env_steps");
  learner.grad_steps_ = checkpoint.counter("gradient_steps");
  return learner;
}

}  // namespace hrl
