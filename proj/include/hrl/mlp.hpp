#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace hrl {

enum class Activation : std::uint32_t { ReLU = 0, Tanh = 1 };

/// Fully connected network: affine layers with `activation` on hidden layers
/// and a linear output.
///
/// Parameters live in one flat vector in canonical order: for each layer in
/// turn, its weight matrix row-major as [n_out][n_in], then its n_out biases.
struct NetworkSpec {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::ReLU;

  void validate() const;
  std::size_t layer_count() const { return layer_sizes.size() - 1; }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t parameter_count() const;
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
  bool operator==(const NetworkSpec&) const = default;
};

inline constexpr std::uint32_t kParameterFormatVersion = 1;

struct ParameterSet {
  std::vector<double> values;
  std::uint32_t version = kParameterFormatVersion;

  std::size_t size() const { return values.size(); }
  bool all_finite() const;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Glorot-uniform weights, zero biases.
ParameterSet init_parameters(const NetworkSpec& spec, std::uint64_t seed);

/// Layer outputs kept by forward_batch for the backward pass.
/// `layers[0]` is the input batch and `layers.back()` the network output.
struct ForwardCache {
  std::vector<RowMatrix> layers;
};

/// Batched forward pass, one sample per row.
RowMatrix forward_batch(const NetworkSpec& spec, std::span<const double> params,
                        const RowMatrix& inputs, ForwardCache* cache = nullptr);

/// Gradient of sum_b <output_grad[b], f(x_b)> with respect to the parameters.
/// `gradient` must have parameter_count() entries and is overwritten.
void backward_batch(const NetworkSpec& spec, std::span<const double> params,
                    const ForwardCache& cache, const RowMatrix& output_grad,
                    std::span<double> gradient);

std::vector<double> forward(const NetworkSpec& spec, std::span<const double> params,
                            std::span<const double> input);
std::vector<double> backward(const NetworkSpec& spec, std::span<const double> params,
                             std::span<const double> input, std::span<const double> output_grad);

/// Adam with bias correction.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t size, double lr) : m(size, 0.0), v(size, 0.0), learning_rate(lr) {}
};

/// One descent step along `gradient`. Throws DivergenceError on non-finite
/// gradient entries, leaving params and state untouched.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> gradient);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate.
std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> params, double h = 1e-5);

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-12)
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Scalar function of the network output together with its output gradient.
struct LossProbe {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
};

/// Compares backward() against central differences of probe(forward(input)).
double gradient_check(const NetworkSpec& spec, std::span<const double> params,
                      std::span<const double> input, const LossProbe& probe, double h = 1e-5);

}  // namespace hrl
