#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "stbp/errors.hpp"
#include "stbp/tdbn.hpp"

namespace stbp {
namespace {

using oracle::gaussian_tensor;
using oracle::rel_error;

// Brute-force per-channel mean and biased variance over (T, N, H, W).
template <typename Real>
std::pair<double, double> channel_moments(const TensorT<Real>& x, int c) {
  const Shape s = x.shape();
  double sum = 0.0;
  double count = 0.0;
  for (int t = 0; t < s.t; ++t)
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          sum += x.at(t, n, c, h, w);
          count += 1.0;
        }
  const double mean = sum / count;
  double sq = 0.0;
  for (int t = 0; t < s.t; ++t)
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          const double d = x.at(t, n, c, h, w) - mean;
          sq += d * d;
        }
  return {mean, sq / count};
}

TEST(TdBnTrain, HandExample) {
  Tensor x(Shape{2, 1, 1, 1, 2}, std::vector<float>{1, 2, 3, 4});
  TdBnParams p(1);
  p.eps = 0.0;
  const auto out = tdbn_forward_train(x, p);
  const std::vector<float> expect{-1.3416f, -0.4472f, 0.4472f, 1.3416f};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out.y.values()[i], expect[i], 1e-4);
  EXPECT_DOUBLE_EQ(out.cache.mean[0], 2.5);
  EXPECT_DOUBLE_EQ(out.cache.var[0], 1.25);
}

TEST(TdBnTrain, ConstantChannelMapsToBeta) {
  Tensor x(Shape{3, 2, 1, 2, 2}, 4.0f);
  TdBnParams p(1, 0.5, 2.0);
  const Tensor y = tdbn_forward_train(x, p).y;
  for (float v : y.values()) EXPECT_EQ(v, 0.0f);
}

TEST(TdBnTrain, AlphaScalesStandardizedInput) {
  Tensor x(Shape{2, 1, 1, 1, 2}, std::vector<float>{-1, 1, -1, 1});
  TdBnParams one(1, 1.0, 1.0);
  TdBnParams half(1, 1.0 / std::sqrt(2.0), 1.0);
  one.eps = half.eps = 0.0;
  const auto a = tdbn_forward_train(x, one).y;
  const auto b = tdbn_forward_train(x, half).y;
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(b.values()[i], a.values()[i] / std::sqrt(2.0f), 1e-7);
  }
}

TEST(TdBnTrain, PostNormalizationStatistics) {
  std::mt19937_64 rng(1);
  for (double alpha : {1.0, 1.0 / std::sqrt(2.0)}) {
    for (double v_th : {0.5, 1.0, 2.0}) {
      const auto x =
          gaussian_tensor<float>(Shape{4, 3, 3, 5, 5}, rng, 3.0, 7.0);
      TdBnParams p(3, alpha, v_th);
      const auto y = tdbn_forward_train(x, p).y;
      for (int c = 0; c < 3; ++c) {
        const auto [m, v] = channel_moments(y, c);
        const double target = alpha * alpha * v_th * v_th;
        EXPECT_LT(std::abs(m), 1e-5);
        EXPECT_LT(std::abs(v - target) / target, 1e-4);
      }
    }
  }
}

TEST(TdBnTrain, UpdatesRunningStatistics) {
  std::mt19937_64 rng(2);
  const auto x = gaussian_tensor<float>(Shape{2, 4, 2, 3, 3}, rng, 1.0, 2.0);
  TdBnParams p(2);
  const auto out = tdbn_forward_train(x, p);
  EXPECT_EQ(p.num_updates, 1);
  for (int c = 0; c < 2; ++c) {
    const auto [m, v] = channel_moments(x, c);
    EXPECT_NEAR(p.running_mean[c], 0.1 * m, 1e-5);
    EXPECT_NEAR(p.running_var[c], 0.9 + 0.1 * v, 1e-4);
    EXPECT_NEAR(out.cache.mean[c], m, 1e-5);
    EXPECT_NEAR(out.cache.var[c], v, 1e-4);
  }
}

TEST(TdBnTrain, SingleElementChannelIsConfigError) {
  TdBnParams p(1);
  EXPECT_THROW(tdbn_forward_train(Tensor(Shape{1, 1, 1, 1, 1}), p),
               ConfigError);
}

TEST(TdBnTrain, ChannelMismatch) {
  TdBnParams p(3);
  EXPECT_THROW(tdbn_forward_train(Tensor(Shape{1, 2, 2, 2, 2}), p),
               DimensionError);
}

TEST(TdBnParams, Validation) {
  TdBnParams p(2);
  p.momentum = 1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = TdBnParams(2);
  p.running_var[1] = -1.0f;
  EXPECT_THROW(p.validate(), StateError);
  p = TdBnParams(2);
  p.beta.pop_back();
  EXPECT_THROW(p.validate(), DimensionError);
}

TEST(TdBnBackward, ZeroAndConstantUpstream) {
  std::mt19937_64 rng(3);
  const auto x = gaussian_tensor<float>(Shape{2, 3, 2, 2, 2}, rng);
  TdBnParams p(2, 0.7, 1.3);
  const auto out = tdbn_forward_train(x, p);
  const auto zero = tdbn_backward(Tensor(x.shape()), out.cache, p);
  for (float v : zero.input.values()) EXPECT_EQ(v, 0.0f);
  for (float v : zero.lambda) EXPECT_EQ(v, 0.0f);
  for (float v : zero.beta) EXPECT_EQ(v, 0.0f);

  Tensor g(x.shape());
  const Shape s = x.shape();
  for (int t = 0; t < s.t; ++t)
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          g.at(t, n, 0, h, w) = 2.0f;
          g.at(t, n, 1, h, w) = -0.5f;
        }
  const auto cst = tdbn_backward(g, out.cache, p);
  for (float v : cst.input.values()) EXPECT_NEAR(v, 0.0f, 1e-5);
  EXPECT_FLOAT_EQ(cst.beta[0], 2.0f * 24);
  EXPECT_FLOAT_EQ(cst.beta[1], -0.5f * 24);
}

TEST(TdBnBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (const Shape s : {Shape{2, 2, 1, 1, 2}, Shape{3, 2, 2, 2, 3}}) {
    auto x = gaussian_tensor<double>(s, rng, 0.5, 1.5);
    TdBnParamsT<double> p(s.c, 0.8, 1.5);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (auto& v : p.lambda) v = u(rng);
    for (auto& v : p.beta) v = u(rng) - 1.0;
    const auto g = gaussian_tensor<double>(s, rng);
    auto loss = [&] {
      TdBnParamsT<double> q = p;
      const auto y = tdbn_forward_train(x, q).y;
      double acc = 0.0;
      for (std::size_t i = 0; i < y.numel(); ++i) {
        acc += g.values()[i] * y.values()[i];
      }
      return acc;
    };
    TdBnParamsT<double> q = p;
    const auto out = tdbn_forward_train(x, q);
    const auto grads = tdbn_backward(g, out.cache, p);
    auto fd = [&](double& v) {
      const double saved = v;
      v = saved + 1e-5;
      const double up = loss();
      v = saved - 1e-5;
      const double down = loss();
      v = saved;
      return (up - down) / 2e-5;
    };
    for (std::size_t i = 0; i < x.numel(); ++i) {
      EXPECT_LT(rel_error(grads.input.values()[i], fd(x.values()[i])), 1e-4);
    }
    for (int c = 0; c < s.c; ++c) {
      const auto k = static_cast<std::size_t>(c);
      EXPECT_LT(rel_error(grads.lambda[k], fd(p.lambda[k])), 1e-4);
      EXPECT_LT(rel_error(grads.beta[k], fd(p.beta[k])), 1e-4);
      double sum = 0.0;
      for (int t = 0; t < s.t; ++t)
        for (int n = 0; n < s.n; ++n)
          for (int h = 0; h < s.h; ++h)
            for (int w = 0; w < s.w; ++w) sum += g.at(t, n, c, h, w);
      EXPECT_DOUBLE_EQ(grads.beta[k], sum);
    }
  }
}

TEST(TdBnBackward, CacheMismatchIsStateError) {
  TdBnParams p(1);
  const auto out = tdbn_forward_train(Tensor(Shape{2, 1, 1, 1, 2},
                                             std::vector<float>{1, 2, 3, 4}),
                                      p);
  EXPECT_THROW(tdbn_backward(Tensor(Shape{1, 1, 1, 1, 2}), out.cache, p),
               StateError);
  EXPECT_THROW(tdbn_backward(Tensor(Shape{1, 1, 1, 1, 2}), TdBnCache<float>{},
                             p),
               StateError);
}

TEST(TdBnInfer, HandExamples) {
  TdBnParams p(1);
  p.eps = 0.0;
  p.num_updates = 1;
  Tensor x(Shape{1, 1, 1, 1, 3}, std::vector<float>{-2, 0.5, 5});
  EXPECT_EQ(tdbn_forward_infer(x, p), x);

  p.running_mean = {1.0f};
  p.running_var = {3.0f};
  Tensor five(Shape{1, 1, 1, 1, 1}, std::vector<float>{5});
  EXPECT_NEAR(tdbn_forward_infer(five, p).values()[0], 2.3094, 1e-4);

  p.lambda = {0.0f};
  p.beta = {0.25f};
  const Tensor y = tdbn_forward_infer(x, p);
  for (float v : y.values()) EXPECT_EQ(v, 0.25f);
}

TEST(TdBnInfer, RequiresPopulatedStats) {
  TdBnParams p(1);
  EXPECT_THROW(tdbn_forward_infer(Tensor(Shape{1, 1, 1, 1, 1}), p), StateError);
  EXPECT_THROW(fuse_into_weights(ConvParams(1, 1, 1, 1, 0), p), StateError);
}

TEST(TdBnInfer, DoesNotTouchState) {
  std::mt19937_64 rng(5);
  TdBnParams p(2);
  tdbn_forward_train(gaussian_tensor<float>(Shape{2, 2, 2, 2, 2}, rng), p);
  const TdBnParams before = p;
  tdbn_forward_infer(gaussian_tensor<float>(Shape{2, 2, 2, 2, 2}, rng), p);
  EXPECT_EQ(p.running_mean, before.running_mean);
  EXPECT_EQ(p.running_var, before.running_var);
  EXPECT_EQ(p.num_updates, before.num_updates);
}

TEST(Fusion, IdentityStatistics) {
  ConvParams c(2, 2, 3, 1, 1);
  std::mt19937_64 rng(6);
  std::normal_distribution<float> d;
  for (auto& v : c.weight) v = d(rng);
  for (auto& v : c.bias) v = d(rng);
  TdBnParams p(2);
  p.eps = 0.0;
  p.num_updates = 1;
  const auto f = fuse_into_weights(c, p);
  EXPECT_EQ(f.weight, c.weight);
  EXPECT_EQ(f.bias, c.bias);
}

TEST(Fusion, ScalarHandExample) {
  ConvParams c(1, 1, 1, 1, 0);
  c.weight = {2.0f};
  c.bias = {1.0f};
  TdBnParams p(1);
  p.eps = 0.0;
  p.running_mean = {1.0f};
  p.running_var = {3.0f};
  p.num_updates = 1;
  const auto f = fuse_into_weights(c, p);
  EXPECT_NEAR(f.weight[0], 1.1547, 1e-4);
  EXPECT_NEAR(f.bias[0], 0.0, 1e-7);
}

TEST(Fusion, MatchesConvThenInferNormalization) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int ci = 1 + trial % 3;
    const int co = 1 + (trial * 7) % 4;
    const int k = trial % 2 ? 3 : 1;
    ConvParams c(ci, co, k, 1 + trial % 2, k / 2);
    std::normal_distribution<float> d;
    for (auto& v : c.weight) v = d(rng);
    for (auto& v : c.bias) v = d(rng);
    TdBnParams p(co, trial % 3 ? 1.0 : 1.0 / std::sqrt(2.0), 0.5 + u(rng));
    for (int ch = 0; ch < co; ++ch) {
      p.lambda[ch] = static_cast<float>(0.5 + u(rng));
      p.beta[ch] = static_cast<float>(u(rng) - 0.5);
      p.running_mean[ch] = static_cast<float>(u(rng) - 0.5);
      p.running_var[ch] = static_cast<float>(0.2 + 2.0 * u(rng));
    }
    p.num_updates = 3;
    const auto x = oracle::spike_tensor<float>(Shape{2, 2, ci, 5, 5}, rng, 0.3);
    const auto ref = tdbn_forward_infer(conv2d(x, c), p);
    const auto fused = conv2d(x, fuse_into_weights(c, p));
    for (std::size_t i = 0; i < ref.numel(); ++i) {
      EXPECT_NEAR(fused.values()[i], ref.values()[i], 1e-5);
    }
  }
}

TEST(Fusion, LinearMatchesInferNormalization) {
  std::mt19937_64 rng(8);
  LinearParams l(6, 3);
  std::normal_distribution<float> d;
  for (auto& v : l.weight) v = d(rng);
  for (auto& v : l.bias) v = d(rng);
  TdBnParams p(3);
  p.running_mean = {0.3f, -0.2f, 0.0f};
  p.running_var = {0.5f, 2.0f, 1.2f};
  p.lambda = {1.2f, 0.8f, 1.0f};
  p.beta = {0.1f, -0.3f, 0.0f};
  p.num_updates = 1;
  const auto x = oracle::spike_tensor<float>(Shape{3, 2, 6, 1, 1}, rng, 0.5);
  const auto ref = tdbn_forward_infer(linear(x, l), p);
  const auto fused = linear(x, fuse_into_weights(l, p));
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    EXPECT_NEAR(fused.values()[i], ref.values()[i], 1e-5);
  }
  TdBnParams wrong(2);
  wrong.num_updates = 1;
  EXPECT_THROW(fuse_into_weights(l, wrong), DimensionError);
}

}  // namespace
}  // namespace stbp
