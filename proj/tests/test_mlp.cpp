#include <gtest/gtest.h>

#include <cmath>

#include "hrl/errors.hpp"
#include "hrl/mlp.hpp"
#include "hrl/rng.hpp"

using namespace hrl;

namespace {

// Straightforward per-neuron evaluation, independent of the Eigen path.
std::vector<double> scalar_forward(const NetworkSpec& spec, const std::vector<double>& p, std::vector<double> x) {
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const std::size_t n_in = spec.layer_sizes[l], n_out = spec.layer_sizes[l + 1];
    const std::size_t b_off = off + n_in * n_out;
    std::vector<double> y(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      double s = p[b_off + o];
      for (std::size_t i = 0; i < n_in; ++i) s += p[off + o * n_in + i] * x[i];
      const bool hidden = l + 2 < spec.layer_sizes.size();
      if (hidden) s = spec.activation == Activation::ReLU ? (s > 0 ? s : 0.0) : std::tanh(s);
      y[o] = s;
    }
    off = b_off + n_out;
    x = std::move(y);
  }
  return x;
}

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

LossProbe squared_error(std::vector<double> target) {
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

}  // namespace

TEST(Spec, Layout) {
  const NetworkSpec spec{{3, 4, 2}, Activation::ReLU};
  EXPECT_EQ(spec.parameter_count(), 3u * 4 + 4 + 4 * 2 + 2);
  EXPECT_EQ(spec.weight_offset(1), 16u);
  EXPECT_EQ(spec.bias_offset(1), 24u);
  EXPECT_THROW((NetworkSpec{{3}, Activation::ReLU}).validate(), ConfigError);
  EXPECT_THROW((NetworkSpec{{3, 0, 2}, Activation::ReLU}).validate(), ConfigError);
}

TEST(Init, BiasesZeroAndWeightsBounded) {
  const NetworkSpec spec{{25, 128, 128, 5}, Activation::ReLU};
  const auto p = init_parameters(spec, 42);
  EXPECT_EQ(p.values, init_parameters(spec, 42).values);
  EXPECT_NE(p.values, init_parameters(spec, 43).values);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double n_in = spec.layer_sizes[l], n_out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (n_in + n_out));
    for (std::size_t i = spec.weight_offset(l); i < spec.bias_offset(l); ++i) EXPECT_LE(std::abs(p.values[i]), limit);
    for (std::size_t i = spec.bias_offset(l); i < spec.bias_offset(l) + n_out; ++i) EXPECT_EQ(p.values[i], 0.0);
  }
}

TEST(Forward, ZeroParamsGiveZero) {
  const NetworkSpec spec{{4, 6, 3}, Activation::Tanh};
  const std::vector<double> p(spec.parameter_count(), 0.0);
  for (double y : forward(spec, p, std::vector<double>{1, -2, 3, 4})) EXPECT_EQ(y, 0.0);
}

TEST(Forward, IdentityLayer) {
  const NetworkSpec spec{{3, 3}, Activation::ReLU};
  std::vector<double> p(spec.parameter_count(), 0.0);
  for (int i = 0; i < 3; ++i) p[i * 3 + i] = 1.0;
  const std::vector<double> x{0.5, -1.5, 2.0};
  EXPECT_EQ(forward(spec, p, x), x);
}

TEST(Forward, MatchesScalarOracle) {
  Rng rng(9);
  for (const auto act : {Activation::ReLU, Activation::Tanh}) {
    const NetworkSpec spec{{7, 11, 9, 4}, act};
    const auto p = random_vector(spec.parameter_count(), rng);
    for (int trial = 0; trial < 10; ++trial) {
      const auto x = random_vector(7, rng, 2.0);
      const auto got = forward(spec, p, x);
      const auto want = scalar_forward(spec, p, x);
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
  }
}

TEST(Forward, BatchRowsMatchSingleSamples) {
  Rng rng(10);
  const NetworkSpec spec{{5, 8, 3}, Activation::ReLU};
  const auto p = random_vector(spec.parameter_count(), rng);
  RowMatrix batch(4, 5);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) batch(r, c) = rng.uniform(-1, 1);
  const RowMatrix out = forward_batch(spec, p, batch);
  for (int r = 0; r < 4; ++r) {
    const std::vector<double> x(batch.row(r).data(), batch.row(r).data() + 5);
    const auto single = forward(spec, p, x);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out(r, c), single[c], 1e-12);
  }
}

TEST(Backward, ZeroOutputGradient) {
  Rng rng(1);
  const NetworkSpec spec{{4, 5, 2}, Activation::Tanh};
  const auto p = random_vector(spec.parameter_count(), rng);
  for (double g : backward(spec, p, random_vector(4, rng), std::vector<double>{0.0, 0.0})) EXPECT_EQ(g, 0.0);
}

TEST(Backward, LinearChainRule) {
  const NetworkSpec spec{{3, 1}, Activation::ReLU};
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  const std::vector<double> x{1.0, -2.0, 3.0};
  const auto g = backward(spec, p, x, std::vector<double>{2.0});
  EXPECT_EQ(g, (std::vector<double>{2.0, -4.0, 6.0, 2.0}));
}

TEST(GradientCheck, LinearIsExact) {
  Rng rng(2);
  const NetworkSpec spec{{6, 3}, Activation::ReLU};
  const auto p = random_vector(spec.parameter_count(), rng);
  const std::vector<double> w{0.5, -1.0, 2.0};
  LossProbe linear{[w](std::span<const double> y) { return w[0] * y[0] + w[1] * y[1] + w[2] * y[2]; },
                   [w](std::span<const double>) { return w; }};
  // Inputs away from zero keep every gradient entry well above the rounding noise of f.
  std::vector<double> x(6);
  for (double& v : x) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 1.5);
  EXPECT_LT(gradient_check(spec, p, x, linear), 1e-10);
}

TEST(GradientCheck, DeepTanhNet) {
  Rng rng(3);
  const NetworkSpec spec{{10, 16, 16, 4}, Activation::Tanh};
  const auto p = init_parameters(spec, 3);
  EXPECT_LT(gradient_check(spec, p.values, random_vector(10, rng), squared_error(random_vector(4, rng))), 1e-6);
}

TEST(GradientCheck, DetectsCorruptedGradient) {
  Rng rng(4);
  const NetworkSpec spec{{5, 8, 3}, Activation::Tanh};
  const auto p = init_parameters(spec, 4).values;
  const auto x = random_vector(5, rng);
  const auto probe = squared_error(random_vector(3, rng));
  auto analytic = backward(spec, p, x, probe.gradient(forward(spec, p, x)));
  analytic[3] *= 1.1;
  analytic[3] += 0.05;
  const auto numeric = numeric_gradient(
      [&](std::span<const double> q) { return probe.value(forward(spec, q, x)); }, p);
  EXPECT_GT(max_relative_error(analytic, numeric), 1e-2);
}

TEST(Adam, ZeroGradientOnlyTicks) {
  AdamState s(3, 0.01);
  std::vector<double> p{1, 2, 3};
  adam_step(s, p, std::vector<double>{0, 0, 0});
  EXPECT_EQ(p, (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(s.t, 1u);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  AdamState s(3, 0.01);
  std::vector<double> p{0, 0, 0};
  adam_step(s, p, std::vector<double>{3.0, -0.2, 50.0});
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_NEAR(p[1], 0.01, 1e-9);
  EXPECT_NEAR(p[2], -0.01, 1e-9);
}

TEST(Adam, DescendsQuadratic) {
  AdamState s(2, 0.05);
  std::vector<double> p{3.0, -2.0};
  auto loss = [&] { return p[0] * p[0] + 4.0 * p[1] * p[1]; };
  double prev = loss();
  for (int i = 0; i < 100; ++i) {
    adam_step(s, p, std::vector<double>{2.0 * p[0], 8.0 * p[1]});
    const double now = loss();
    if (i >= 5) {
      EXPECT_LT(now, prev);
    }
    prev = now;
  }
  EXPECT_LT(prev, 0.5);
}

TEST(Adam, RejectsNonFinite) {
  AdamState s(2, 0.01);
  std::vector<double> p{1, 1};
  EXPECT_THROW(adam_step(s, p, std::vector<double>{NAN, 0}), DivergenceError);
  EXPECT_EQ(p, (std::vector<double>{1, 1}));
  EXPECT_EQ(s.t, 0u);
}

TEST(Softmax, StableAndNormalized) {
  const auto p = softmax(std::vector<double>{1000.0, 1001.0, 999.0});
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
  const auto lp = log_softmax(std::vector<double>{1000.0, 1001.0, 999.0});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(std::exp(lp[i]), p[i], 1e-15);
  EXPECT_NEAR(lp[1], -std::log(1.0 + std::exp(-1.0) + std::exp(-2.0)), 1e-12);
}
