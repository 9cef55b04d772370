#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "stbp/errors.hpp"
#include "stbp/layers.hpp"
#include "stbp/tensor.hpp"

namespace stbp {
namespace {

using oracle::gaussian_tensor;
using oracle::rel_error;

TEST(Shape, RejectsNonPositiveExtents) {
  EXPECT_THROW(validate_shape(Shape{0, 1, 1, 1, 1}), DimensionError);
  EXPECT_THROW(validate_shape(Shape{1, 1, 1, -2, 1}), DimensionError);
  EXPECT_NO_THROW(validate_shape(Shape{2, 3, 4, 5, 6}));
  EXPECT_EQ((Shape{2, 3, 4, 5, 6}).numel(), 720u);
}

TEST(Tensor, RowMajorLayout) {
  Tensor x(Shape{2, 2, 2, 2, 2});
  for (std::size_t i = 0; i < x.numel(); ++i) x.values()[i] = float(i);
  EXPECT_EQ(x.at(1, 0, 1, 0, 1), 21.0f);
  EXPECT_EQ(x.sample(1, 1)[0], 24.0f);
  EXPECT_EQ(x.slice_time(1).at(0, 0, 0, 0, 0), 16.0f);
  EXPECT_THROW(Tensor(Shape{1, 1, 1, 1, 2}, std::vector<float>{1.0f}),
               DimensionError);
}

TEST(Tensor, BinaryCheck) {
  Tensor x(Shape{1, 1, 1, 1, 3}, std::vector<float>{0, 1, 1});
  EXPECT_TRUE(x.is_binary());
  x.values()[2] = 0.5f;
  EXPECT_FALSE(x.is_binary());
}

TEST(Tensor, ConcatAndStack) {
  std::mt19937_64 rng(1);
  const auto a = gaussian_tensor<float>(Shape{1, 1, 2, 2, 2}, rng);
  const auto b = gaussian_tensor<float>(Shape{1, 1, 2, 2, 2}, rng);
  std::vector<Tensor> frames{a, b};
  const auto t = concat_time<float>(frames);
  EXPECT_EQ(t.shape(), (Shape{2, 1, 2, 2, 2}));
  EXPECT_EQ(t.slice_time(1), b);
  const auto s = stack_batch<float>(frames);
  EXPECT_EQ(s.shape(), (Shape{1, 2, 2, 2, 2}));
  EXPECT_EQ(s.at(0, 1, 1, 1, 1), b.at(0, 0, 1, 1, 1));
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(2);
  const auto x = gaussian_tensor<float>(Shape{2, 2, 3, 4, 4}, rng);
  ConvParams p(3, 3, 1, 1, 0);
  for (int c = 0; c < 3; ++c) p.w(c, c, 0, 0) = 1.0f;
  EXPECT_EQ(conv2d(x, p), x);
}

TEST(Conv2d, ZeroKernelGivesBias) {
  std::mt19937_64 rng(3);
  const auto x = gaussian_tensor<float>(Shape{1, 2, 2, 5, 5}, rng);
  ConvParams p(2, 2, 3, 1, 1);
  p.bias = {0.5f, -1.5f};
  const auto y = conv2d(x, p);
  for (int n = 0; n < 2; ++n)
    for (int h = 0; h < 5; ++h)
      for (int w = 0; w < 5; ++w) {
        EXPECT_EQ(y.at(0, n, 0, h, w), 0.5f);
        EXPECT_EQ(y.at(0, n, 1, h, w), -1.5f);
      }
}

TEST(Conv2d, HandCrossCorrelation) {
  Tensor x(Shape{1, 1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  ConvParams p(1, 1, 2, 1, 0);
  p.weight = {1, 0, 0, 1};
  const auto y = conv2d(x, p);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1, 1}));
  EXPECT_EQ(y.values()[0], 5.0f);
}

TEST(Conv2d, NoKernelFlip) {
  Tensor x(Shape{1, 1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  ConvParams p(1, 1, 2, 1, 0);
  p.weight = {1, 0, 0, 0};
  EXPECT_EQ(conv2d(x, p).values()[0], 1.0f);
}

TEST(Conv2d, OutputExtent) {
  EXPECT_EQ(conv_output_extent(32, 3, 1, 1), 32);
  EXPECT_EQ(conv_output_extent(32, 3, 2, 1), 16);
  EXPECT_EQ(conv_output_extent(224, 7, 2, 3), 112);
  EXPECT_EQ(conv_output_extent(5, 2, 2, 0), 2);
  EXPECT_THROW(conv_output_extent(2, 5, 1, 0), DimensionError);
}

TEST(Conv2d, ChannelMismatchNamesShapes) {
  Tensor x(Shape{1, 1, 2, 3, 3});
  ConvParams p(3, 1, 1, 1, 0);
  try {
    conv2d(x, p);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[1,1,2,3,3]"), std::string::npos)
        << e.what();
  }
}

TEST(Conv2d, IsLinear) {
  std::mt19937_64 rng(4);
  const Shape s{2, 2, 2, 5, 5};
  const auto x = gaussian_tensor<float>(s, rng);
  const auto y = gaussian_tensor<float>(s, rng);
  ConvParams p(2, 3, 3, 2, 1);
  std::normal_distribution<float> d;
  for (auto& v : p.weight) v = d(rng);
  Tensor combo(s);
  for (std::size_t i = 0; i < combo.numel(); ++i) {
    combo.values()[i] = 2.0f * x.values()[i] - 0.5f * y.values()[i];
  }
  const auto fx = conv2d(x, p);
  const auto fy = conv2d(y, p);
  const auto fc = conv2d(combo, p);
  for (std::size_t i = 0; i < fc.numel(); ++i) {
    const double expect = 2.0 * fx.values()[i] - 0.5 * fy.values()[i];
    EXPECT_NEAR(fc.values()[i], expect, 1e-5 * std::max(1.0, std::abs(expect)));
  }
}

TEST(Conv2d, CommutesWithTimeSlicing) {
  std::mt19937_64 rng(5);
  const auto x = gaussian_tensor<float>(Shape{3, 2, 2, 4, 4}, rng);
  ConvParams p(2, 2, 3, 1, 1);
  std::normal_distribution<float> d;
  for (auto& v : p.weight) v = d(rng);
  const auto full = conv2d(x, p);
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(conv2d(x.slice_time(t), p), full.slice_time(t));
  }
}

TEST(Linear, HandExamples) {
  LinearParams id(2, 2);
  id.weight = {1, 0, 0, 1};
  Tensor v(Shape{1, 1, 2, 1, 1}, std::vector<float>{3, 4});
  EXPECT_EQ(linear(v, id), v);

  LinearParams sum(2, 1);
  sum.weight = {1, 1};
  EXPECT_EQ(linear(v, sum).values()[0], 7.0f);

  LinearParams m(2, 2);
  m.weight = {2, 0, 0, 3};
  m.bias = {1, -1};
  Tensor ones(Shape{1, 1, 2, 1, 1}, std::vector<float>{1, 1});
  const auto y = linear(ones, m);
  EXPECT_EQ(y.values()[0], 3.0f);
  EXPECT_EQ(y.values()[1], 2.0f);
}

TEST(Linear, FlattensFeaturesAndChecksWidth) {
  Tensor x(Shape{2, 1, 2, 2, 1}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8});
  LinearParams p(4, 1);
  p.weight = {1, 1, 1, 1};
  const auto y = linear(x, p);
  EXPECT_EQ(y.shape(), (Shape{2, 1, 1, 1, 1}));
  EXPECT_EQ(y.values()[0], 10.0f);
  EXPECT_EQ(y.values()[1], 26.0f);
  LinearParams bad(3, 1);
  EXPECT_THROW(linear(x, bad), DimensionError);
}

TEST(AvgPool, HandExamples) {
  Tensor x(Shape{1, 1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(avg_pool2d(x, 1), x);
  EXPECT_EQ(avg_pool2d(x, 2).values()[0], 2.5f);
  Tensor c(Shape{2, 1, 1, 4, 4}, 0.75f);
  const Tensor pooled = avg_pool2d(c, 2);
  for (float v : pooled.values()) EXPECT_EQ(v, 0.75f);
  Tensor odd(Shape{1, 1, 1, 3, 3});
  EXPECT_THROW(avg_pool2d(odd, 2), DimensionError);
}

TEST(ArgmaxRows, FirstWinsOnTies) {
  Matrix m(2, 3, std::vector<float>{1, 3, 3, -1, -2, -3});
  EXPECT_EQ(argmax_rows(m), (std::vector<int>{1, 0}));
}

// Central differences of a scalar projection <g, f(x)> in double.
template <typename Fn>
double fd_directional(Fn&& f, std::vector<double>& param, std::size_t i,
                      const TensorT<double>& g, double h = 1e-3) {
  const double saved = param[i];
  param[i] = saved + h;
  const auto up = f();
  param[i] = saved - h;
  const auto down = f();
  param[i] = saved;
  double s = 0.0;
  for (std::size_t k = 0; k < g.numel(); ++k) {
    s += g.values()[k] * (up.values()[k] - down.values()[k]);
  }
  return s / (2.0 * h);
}

TEST(Conv2dBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int stride : {1, 2}) {
    auto x = gaussian_tensor<double>(Shape{2, 2, 2, 5, 5}, rng);
    ConvParamsT<double> p(2, 3, 3, stride, 1);
    std::normal_distribution<double> d;
    for (auto& v : p.weight) v = d(rng);
    for (auto& v : p.bias) v = d(rng);
    const auto g = gaussian_tensor<double>(conv2d_output_shape(x.shape(), p), rng);
    const auto grads = conv2d_backward(g, x, p);
    auto f = [&] { return conv2d(x, p); };
    for (std::size_t i = 0; i < p.weight.size(); ++i) {
      EXPECT_LT(rel_error(grads.weight[i], fd_directional(f, p.weight, i, g)),
                1e-4);
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
      EXPECT_LT(rel_error(grads.bias[i], fd_directional(f, p.bias, i, g)), 1e-4);
    }
    for (std::size_t i = 0; i < x.numel(); ++i) {
      EXPECT_LT(rel_error(grads.input.values()[i],
                          fd_directional(f, x.storage(), i, g)),
                1e-4);
    }
  }
}

TEST(LinearBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  auto x = gaussian_tensor<double>(Shape{3, 2, 2, 2, 1}, rng);
  LinearParamsT<double> p(4, 3);
  std::normal_distribution<double> d;
  for (auto& v : p.weight) v = d(rng);
  for (auto& v : p.bias) v = d(rng);
  const auto g = gaussian_tensor<double>(Shape{3, 2, 3, 1, 1}, rng);
  const auto grads = linear_backward(g, x, p);
  auto f = [&] { return linear(x, p); };
  for (std::size_t i = 0; i < p.weight.size(); ++i) {
    EXPECT_LT(rel_error(grads.weight[i], fd_directional(f, p.weight, i, g)),
              1e-4);
  }
  for (std::size_t i = 0; i < p.bias.size(); ++i) {
    EXPECT_LT(rel_error(grads.bias[i], fd_directional(f, p.bias, i, g)), 1e-4);
  }
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_LT(rel_error(grads.input.values()[i],
                        fd_directional(f, x.storage(), i, g)),
              1e-4);
  }
}

TEST(AvgPoolBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  auto x = gaussian_tensor<double>(Shape{2, 1, 2, 4, 4}, rng);
  const auto g = gaussian_tensor<double>(Shape{2, 1, 2, 2, 2}, rng);
  const auto gx = avg_pool2d_backward(g, x.shape(), 2);
  auto f = [&] { return avg_pool2d(x, 2); };
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_LT(rel_error(gx.values()[i], fd_directional(f, x.storage(), i, g)),
              1e-4);
  }
}

}  // namespace
}  // namespace stbp
