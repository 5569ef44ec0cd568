#include "hrl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hrl/errors.hpp"
#include "hrl/rng.hpp"

namespace hrl {

namespace {

using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::RowVectorXd>;
using VectorMap = Eigen::Map<Eigen::RowVectorXd>;

void check_params(const NetworkSpec& spec, std::span<const double> params) {
  if (params.size() != spec.parameter_count())
    throw std::invalid_argument("parameter vector has " + std::to_string(params.size()) +
                                " entries, network needs " + std::to_string(spec.parameter_count()));
}

}  // namespace

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("network needs at least an input and an output layer");
  for (auto n : layer_sizes) {
    if (n < 1) throw ConfigError("network layer sizes must be >= 1");
  }
  if (activation != Activation::ReLU && activation != Activation::Tanh)
    throw ConfigError("unknown activation code");
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  return n;
}

std::size_t NetworkSpec::weight_offset(std::size_t layer) const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer; ++l) n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  return n;
}

std::size_t NetworkSpec::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + layer_sizes[layer] * layer_sizes[layer + 1];
}

bool ParameterSet::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

ParameterSet init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParameterSet params;
  params.values.assign(spec.parameter_count(), 0.0);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto n_in = spec.layer_sizes[l];
    const auto n_out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(n_in + n_out));
    const std::size_t off = spec.weight_offset(l);
    for (std::size_t i = 0; i < n_in * n_out; ++i) params.values[off + i] = rng.uniform(-limit, limit);
  }
  return params;
}

RowMatrix forward_batch(const NetworkSpec& spec, std::span<const double> params,
                        const RowMatrix& inputs, ForwardCache* cache) {
  check_params(spec, params);
  if (static_cast<std::size_t>(inputs.cols()) != spec.input_size())
    throw std::invalid_argument("input width " + std::to_string(inputs.cols()) + " != network input " +
                                std::to_string(spec.input_size()));
  if (cache) {
    cache->layers.resize(spec.layer_count() + 1);
    cache->layers[0] = inputs;
  }
  RowMatrix current = inputs;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto n_in = static_cast<Eigen::Index>(spec.layer_sizes[l]);
    const auto n_out = static_cast<Eigen::Index>(spec.layer_sizes[l + 1]);
    ConstMatrixMap w(params.data() + spec.weight_offset(l), n_out, n_in);
    ConstVectorMap b(params.data() + spec.bias_offset(l), n_out);
    RowMatrix z(current.rows(), n_out);
    z.noalias() = current * w.transpose();
    z.rowwise() += b;
    if (l + 1 < spec.layer_count()) {
      if (spec.activation == Activation::ReLU) {
        z = z.cwiseMax(0.0);
      } else {
        z = z.array().tanh().matrix();
      }
    }
    current = std::move(z);
    if (cache) cache->layers[l + 1] = current;
  }
  return current;
}

void backward_batch(const NetworkSpec& spec, std::span<const double> params,
                    const ForwardCache& cache, const RowMatrix& output_grad,
                    std::span<double> gradient) {
  check_params(spec, params);
  if (gradient.size() != params.size()) throw std::invalid_argument("gradient buffer size mismatch");
  if (cache.layers.size() != spec.layer_count() + 1) throw std::invalid_argument("forward cache does not match network");
  const auto& out = cache.layers.back();
  if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols())
    throw std::invalid_argument("output gradient shape mismatch");

  RowMatrix delta = output_grad;
  for (std::size_t l = spec.layer_count(); l-- > 0;) {
    const auto n_in = static_cast<Eigen::Index>(spec.layer_sizes[l]);
    const auto n_out = static_cast<Eigen::Index>(spec.layer_sizes[l + 1]);
    ConstMatrixMap w(params.data() + spec.weight_offset(l), n_out, n_in);
    MatrixMap gw(gradient.data() + spec.weight_offset(l), n_out, n_in);
    VectorMap gb(gradient.data() + spec.bias_offset(l), n_out);
    const RowMatrix& input = cache.layers[l];
    gw.noalias() = delta.transpose() * input;
    gb = delta.colwise().sum();
    if (l == 0) break;
    RowMatrix upstream(delta.rows(), n_in);
    upstream.noalias() = delta * w;
    if (spec.activation == Activation::ReLU) {
      upstream = (input.array() > 0.0).select(upstream, 0.0);
    } else {
      upstream = (upstream.array() * (1.0 - input.array().square())).matrix();
    }
    delta = std::move(upstream);
  }
}

std::vector<double> forward(const NetworkSpec& spec, std::span<const double> params,
                            std::span<const double> input) {
  if (input.size() != spec.input_size())
    throw std::invalid_argument("input length " + std::to_string(input.size()) + " != network input " +
                                std::to_string(spec.input_size()));
  RowMatrix x = Eigen::Map<const RowMatrix>(input.data(), 1, static_cast<Eigen::Index>(input.size()));
  RowMatrix y = forward_batch(spec, params, x);
  return {y.data(), y.data() + y.size()};
}

std::vector<double> backward(const NetworkSpec& spec, std::span<const double> params,
                             std::span<const double> input, std::span<const double> output_grad) {
  if (input.size() != spec.input_size()) throw std::invalid_argument("input length mismatch");
  if (output_grad.size() != spec.output_size()) throw std::invalid_argument("output gradient length mismatch");
  ForwardCache cache;
  RowMatrix x = Eigen::Map<const RowMatrix>(input.data(), 1, static_cast<Eigen::Index>(input.size()));
  forward_batch(spec, params, x, &cache);
  RowMatrix g = Eigen::Map<const RowMatrix>(output_grad.data(), 1, static_cast<Eigen::Index>(output_grad.size()));
  std::vector<double> gradient(params.size());
  backward_batch(spec, params, cache, g, gradient);
  return gradient;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> gradient) {
  if (params.size() != gradient.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step shape mismatch");
  for (double g : gradient) {
    if (!std::isfinite(g)) throw DivergenceError("non-finite gradient entry in optimizer step");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  const double max = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += out[i] = std::exp(logits[i] - max);
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double max = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max);
  const double log_sum = std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = (logits[i] - max) - log_sum;
  return out;
}

std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> params, double h) {
  std::vector<double> probe(params.begin(), params.end());
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    const double hi = saved + h;
    const double lo = saved - h;
    probe[i] = hi;
    const double up = f(probe);
    probe[i] = lo;
    const double down = f(probe);
    probe[i] = saved;
    // Divide by the step actually taken, which differs from 2h by rounding.
    grad[i] = (up - down) / (hi - lo);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("gradient length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-12});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

double gradient_check(const NetworkSpec& spec, std::span<const double> params,
                      std::span<const double> input, const LossProbe& probe, double h) {
  const auto out = forward(spec, params, input);
  const auto out_grad = probe.gradient(out);
  const auto analytic = backward(spec, params, input, out_grad);
  const auto numeric = numeric_gradient(
      [&](std::span<const double> p) { return probe.value(forward(spec, p, input)); }, params, h);
  return max_relative_error(analytic, numeric);
}

}  // namespace hrl
