#include "hrl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hrl/dqn.hpp"
#include "hrl/errors.hpp"

namespace hrl {

namespace {

RowMatrix gather(const RolloutBatch& batch, std::span<const std::size_t> indices) {
  RowMatrix m(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(batch.observation_size));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto obs = batch.observation(indices[i]);
    std::copy(obs.begin(), obs.end(), m.row(static_cast<Eigen::Index>(i)).data());
  }
  return m;
}

NetworkSpec make_spec(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Activation act) {
  NetworkSpec spec;
  spec.layer_sizes.push_back(in);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.layer_sizes.push_back(out);
  spec.activation = act;
  return spec;
}

}  // namespace

void PpoConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("ppo.clip_epsilon must be in (0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo.gae_lambda must be in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must be in [0, 1]");
  if (rollout_length == 0) throw ConfigError("ppo.rollout_length must be > 0");
  if (minibatch_size == 0) throw ConfigError("ppo.minibatch_size must be > 0");
  if (rollout_length % minibatch_size != 0)
    throw ConfigError("ppo.rollout_length must be divisible by ppo.minibatch_size");
  if (!(policy_lr > 0.0) || !(value_lr > 0.0)) throw ConfigError("ppo learning rates must be > 0");
  if (!(entropy_coef >= 0.0)) throw ConfigError("ppo.entropy_coef must be >= 0");
  for (auto h : hidden_layers) {
    if (h == 0) throw ConfigError("ppo.hidden_layers entries must be > 0");
  }
}

NetworkSpec PpoConfig::policy_network(std::size_t observation_size, std::size_t action_count) const {
  return make_spec(observation_size, hidden_layers, action_count, activation);
}

NetworkSpec PpoConfig::value_network(std::size_t observation_size) const {
  return make_spec(observation_size, hidden_layers, 1, activation);
}

void normalize_in_place(std::vector<double>& values) {
  if (values.empty()) return;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double std_dev = std::sqrt(var / n);
  for (double& v : values) v = (v - mean) / (std_dev + 1e-8);
}

GaeResult compute_gae(const RolloutBatch& batch, double gamma, double lambda, bool normalize) {
  const std::size_t n = batch.size();
  if (batch.rewards.size() != n || batch.values.size() != n || batch.dones.size() != n ||
      batch.episode_ends.size() != n || batch.bootstrap_values.size() != n)
    throw std::invalid_argument("rollout series have different lengths");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.value_targets.assign(n, 0.0);
  double next_advantage = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    double next_value;
    if (batch.episode_ends[t]) {
      next_value = batch.dones[t] ? 0.0 : batch.bootstrap_values[t];
      next_advantage = 0.0;
    } else {
      next_value = t + 1 < n ? batch.values[t + 1] : batch.last_value;
    }
    const double delta = batch.rewards[t] + gamma * next_value - batch.values[t];
    next_advantage = delta + gamma * lambda * next_advantage;
    out.advantages[t] = next_advantage;
    out.value_targets[t] = next_advantage + batch.values[t];
  }
  if (normalize) normalize_in_place(out.advantages);
  return out;
}

double clipped_surrogate(double ratio, double advantage, double clip_epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

bool clip_active(double ratio, double advantage, double clip_epsilon) {
  return (advantage > 0.0 && ratio > 1.0 + clip_epsilon) || (advantage < 0.0 && ratio < 1.0 - clip_epsilon);
}

PolicyObjective ppo_objective(const RolloutBatch& batch, std::span<const std::size_t> indices,
                              const NetworkSpec& policy_spec, std::span<const double> policy_params,
                              double clip_epsilon, double entropy_coef) {
  if (indices.empty()) throw std::invalid_argument("ppo_objective needs at least one sample");
  if (batch.advantages.size() != batch.size()) throw ContractViolation("advantages not computed");
  ForwardCache cache;
  const RowMatrix logits = forward_batch(policy_spec, policy_params, gather(batch, indices), &cache);
  const auto n = static_cast<double>(indices.size());
  const auto actions = static_cast<std::size_t>(logits.cols());
  RowMatrix out_grad(logits.rows(), logits.cols());
  PolicyObjective result;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const std::size_t t = indices[i];
    const std::span<const double> z(logits.row(row).data(), actions);
    const auto log_p = log_softmax(z);
    const std::size_t a = batch.actions[t];
    const double ratio = std::exp(log_p[a] - batch.log_probs[t]);
    if (!std::isfinite(ratio)) throw DivergenceError("non-finite PPO probability ratio");
    const double adv = batch.advantages[t];
    const bool active = clip_active(ratio, adv, clip_epsilon);
    if (active) ++clipped;
    double entropy = 0.0;
    for (std::size_t k = 0; k < actions; ++k) entropy -= std::exp(log_p[k]) * log_p[k];
    result.surrogate += clipped_surrogate(ratio, adv, clip_epsilon) / n;
    result.entropy += entropy / n;
    for (std::size_t k = 0; k < actions; ++k) {
      const double p = std::exp(log_p[k]);
      const double d_ratio = ratio * ((k == a ? 1.0 : 0.0) - p);
      const double d_surrogate = active ? 0.0 : adv * d_ratio;
      const double d_entropy = -p * (log_p[k] + entropy);
      out_grad(row, static_cast<Eigen::Index>(k)) = (d_surrogate + entropy_coef * d_entropy) / n;
    }
  }
  result.objective = result.surrogate + entropy_coef * result.entropy;
  result.clip_fraction = static_cast<double>(clipped) / n;
  result.gradient.assign(policy_params.size(), 0.0);
  backward_batch(policy_spec, policy_params, cache, out_grad, result.gradient);
  return result;
}

ValueLoss value_loss(const RolloutBatch& batch, std::span<const std::size_t> indices,
                     const NetworkSpec& value_spec, std::span<const double> value_params) {
  if (indices.empty()) throw std::invalid_argument("value_loss needs at least one sample");
  if (batch.value_targets.size() != batch.size()) throw ContractViolation("value targets not computed");
  ForwardCache cache;
  const RowMatrix v = forward_batch(value_spec, value_params, gather(batch, indices), &cache);
  const auto n = static_cast<double>(indices.size());
  RowMatrix out_grad(v.rows(), 1);
  ValueLoss result;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double err = v(row, 0) - batch.value_targets[indices[i]];
    result.loss += err * err / n;
    out_grad(row, 0) = 2.0 * err / n;
  }
  if (!std::isfinite(result.loss)) throw DivergenceError("non-finite value loss");
  result.gradient.assign(value_params.size(), 0.0);
  backward_batch(value_spec, value_params, cache, out_grad, result.gradient);
  return result;
}

PpoLearner::PpoLearner(NetworkSpec policy_spec, NetworkSpec value_spec, PpoConfig config, std::uint64_t seed)
    : policy_spec_(std::move(policy_spec)),
      value_spec_(std::move(value_spec)),
      config_(std::move(config)),
      policy_(init_parameters(policy_spec_, mix_seed(seed, 11))),
      value_(init_parameters(value_spec_, mix_seed(seed, 12))),
      policy_adam_(policy_spec_.parameter_count(), config_.policy_lr),
      value_adam_(value_spec_.parameter_count(), config_.value_lr),
      action_rng_(mix_seed(seed, 13)),
      shuffle_rng_(mix_seed(seed, 14)) {
  config_.validate();
  if (value_spec_.output_size() != 1) throw ConfigError("value network must have one output");
  if (value_spec_.input_size() != policy_spec_.input_size())
    throw ConfigError("policy and value networks must share the input size");
}

std::vector<double> PpoLearner::action_probabilities(std::span<const double> observation) const {
  return softmax(forward(policy_spec_, policy_.values, observation));
}

double PpoLearner::value(std::span<const double> observation) const {
  return forward(value_spec_, value_.values, observation)[0];
}

std::size_t PpoLearner::act_greedy(std::span<const double> observation) const {
  return argmax(forward(policy_spec_, policy_.values, observation));
}

std::size_t PpoLearner::act_sample(std::span<const double> observation) {
  return action_rng_.categorical(action_probabilities(observation));
}

RolloutBatch PpoLearner::collect_rollout(EpisodicEnv& env, std::size_t length) {
  if (length == 0) length = config_.rollout_length;
  if (env.observation_size() != policy_spec_.input_size() || env.action_count() != policy_spec_.output_size())
    throw ContractViolation("environment does not match the policy network shape");
  RolloutBatch batch;
  batch.observation_size = env.observation_size();
  batch.observations.reserve(length * batch.observation_size);
  for (std::size_t t = 0; t < length; ++t) {
    if (needs_reset_) {
      current_obs_ = env.reset();
      needs_reset_ = false;
    }
    const auto log_p = log_softmax(forward(policy_spec_, policy_.values, current_obs_));
    std::vector<double> probs(log_p.size());
    std::transform(log_p.begin(), log_p.end(), probs.begin(), [](double l) { return std::exp(l); });
    const std::size_t a = action_rng_.categorical(probs);
    const double v = value(current_obs_);
    EnvStep step = env.step(a);

    batch.observations.insert(batch.observations.end(), current_obs_.begin(), current_obs_.end());
    batch.actions.push_back(a);
    batch.rewards.push_back(step.reward);
    batch.values.push_back(v);
    batch.log_probs.push_back(log_p[a]);
    batch.dones.push_back(step.terminated);
    const bool ended = step.terminated || step.truncated;
    batch.episode_ends.push_back(ended);
    batch.bootstrap_values.push_back(step.truncated && !step.terminated ? value(step.observation) : 0.0);
    current_obs_ = std::move(step.observation);
    needs_reset_ = ended;
  }
  batch.last_value = needs_reset_ ? 0.0 : value(current_obs_);
  return batch;
}

void PpoLearner::compute_advantages(RolloutBatch& batch) const {
  auto gae = compute_gae(batch, config_.gamma, config_.gae_lambda, config_.normalize_advantages);
  batch.advantages = std::move(gae.advantages);
  batch.value_targets = std::move(gae.value_targets);
}

PpoUpdateMetrics PpoLearner::update(const RolloutBatch& batch) {
  if (batch.advantages.size() != batch.size() || batch.value_targets.size() != batch.size())
    throw ContractViolation("update needs advantages and value targets");
  PpoUpdateMetrics m;
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t mb = std::min(config_.minibatch_size, batch.size());
  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    shuffle_rng_.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(mb, order.size() - start));
      auto pol = ppo_objective(batch, idx, policy_spec_, policy_.values, config_.clip_epsilon, config_.entropy_coef);
      for (double& g : pol.gradient) g = -g;
      adam_step(policy_adam_, policy_.values, pol.gradient);
      const auto val = value_loss(batch, idx, value_spec_, value_.values);
      adam_step(value_adam_, value_.values, val.gradient);
      m.policy_objective += pol.objective;
      m.value_loss += val.loss;
      m.clip_fraction += pol.clip_fraction;
      m.entropy += pol.entropy;
      ++m.minibatches;
    }
  }
  if (m.minibatches > 0) {
    const auto k = static_cast<double>(m.minibatches);
    m.policy_objective /= k;
    m.value_loss /= k;
    m.clip_fraction /= k;
    m.entropy /= k;
  }
  ++updates_;
  return m;
}

Checkpoint PpoLearner::to_checkpoint() const {
  Checkpoint cp;
  cp.agent = "ppo";
  cp.records.push_back({"policy", policy_spec_, policy_});
  cp.records.push_back({"value", value_spec_, value_});
  cp.records.push_back({"policy_adam_m", policy_spec_, ParameterSet{policy_adam_.m}});
  cp.records.push_back({"policy_adam_v", policy_spec_, ParameterSet{policy_adam_.v}});
  cp.records.push_back({"value_adam_m", value_spec_, ParameterSet{value_adam_.m}});
  cp.records.push_back({"value_adam_v", value_spec_, ParameterSet{value_adam_.v}});
  cp.counters = {{"policy_adam_t", policy_adam_.t}, {"value_adam_t", value_adam_.t}, {"updates", updates_}};
  return cp;
}

PpoLearner PpoLearner::from_checkpoint(const Checkpoint& checkpoint, PpoConfig config, std::uint64_t seed) {
  if (checkpoint.agent != "ppo")
    throw CheckpointError(CheckpointError::Kind::Mismatch, "checkpoint is for agent '" + checkpoint.agent + "', not ppo");
  const auto& pol = checkpoint.record("policy");
  const auto& val = checkpoint.record("value");
  PpoLearner learner(pol.spec, val.spec, std::move(config), seed);
  learner.policy_ = pol.params;
  learner.value_ = val.params;
  learner.policy_adam_.m = checkpoint.record("policy_adam_m").params.values;
  learner.policy_adam_.v = checkpoint.record("policy_adam_v").params.values;
  learner.value_adam_.m = checkpoint.record("value_adam_m").params.values;
  learner.value_adam_.v = checkpoint.record("value_adam_v").params.values;
  learner.policy_adam_.t = checkpoint.counter("policy_adam_t");
  learner.value_adam_.t = checkpoint.counter("value_adam_t");
  learner.updates_ = checkpoint.counter("updates");
  return learner;
}

}  // namespace hrl
