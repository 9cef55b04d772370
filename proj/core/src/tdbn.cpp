#include "stbp/tdbn.hpp"

#include <cmath>
#include <string>

#include "stbp/errors.hpp"

namespace stbp {

template <typename Real>
void TdBnParamsT<Real>::validate() const {
  const std::size_t c = lambda.size();
  if (c == 0 || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw DimensionError("tdBN parameter arrays disagree in channel count");
  }
  if (!(alpha > 0.0)) throw ConfigError("tdBN alpha must be positive");
  if (!(v_th > 0.0)) throw ConfigError("tdBN v_th must be positive");
  if (!(eps >= 0.0)) throw ConfigError("tdBN eps must be non-negative");
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw ConfigError("tdBN momentum must lie in (0, 1), got " +
                      std::to_string(momentum));
  }
  for (Real v : running_var) {
    if (v < Real(0)) throw StateError("tdBN running_var is negative");
  }
}

namespace {

template <typename Real>
void check_channels(const Shape& s, const TdBnParamsT<Real>& p,
                    const char* where) {
  if (s.c != p.channels()) {
    throw DimensionError(std::string(where) + ": input " + s.str() + " has " +
                         std::to_string(s.c) + " channels, parameters have " +
                         std::to_string(p.channels()));
  }
}

// Visits every element of channel c across (T, N, H, W).
template <typename Fn>
void for_channel(const Shape& s, int c, Fn&& fn) {
  const std::size_t plane = s.plane_size();
  for (int t = 0; t < s.t; ++t) {
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base =
          ((static_cast<std::size_t>(t) * s.n + n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) fn(base + i);
    }
  }
}

}  // namespace

template <typename Real>
TdBnTrainOutput<Real> tdbn_forward_train(const TensorT<Real>& x,
                                         TdBnParamsT<Real>& params) {
  params.validate();
  const Shape s = x.shape();
  check_channels(s, params, "tdbn_forward_train");
  const std::size_t m = static_cast<std::size_t>(s.t) * s.n * s.plane_size();
  if (m < 2) {
    throw ConfigError("tdbn_forward_train: channel reduction set has " +
                      std::to_string(m) +
                      " element(s); variance needs at least 2");
  }

  TdBnTrainOutput<Real> out{TensorT<Real>(s), {}};
  auto& cache = out.cache;
  cache.x_hat = TensorT<Real>(s);
  cache.inv_std.resize(static_cast<std::size_t>(s.c));
  cache.mean.resize(static_cast<std::size_t>(s.c));
  cache.var.resize(static_cast<std::size_t>(s.c));

  auto xv = x.values();
  auto xh = cache.x_hat.values();
  auto yv = out.y.values();
  const double scale = params.alpha * params.v_th;
  for (int c = 0; c < s.c; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double sum = 0.0;
    for_channel(s, c, [&](std::size_t i) { sum += xv[i]; });
    const double mean = sum / static_cast<double>(m);
    double sq = 0.0;
    for_channel(s, c, [&](std::size_t i) {
      const double d = xv[i] - mean;
      sq += d * d;
    });
    const double var = sq / static_cast<double>(m);
    const double inv_std = 1.0 / std::sqrt(var + params.eps);
    cache.mean[ci] = mean;
    cache.var[ci] = var;
    cache.inv_std[ci] = static_cast<Real>(inv_std);

    const double lam = params.lambda[ci];
    const double bet = params.beta[ci];
    for_channel(s, c, [&](std::size_t i) {
      const double n = (xv[i] - mean) * inv_std;
      xh[i] = static_cast<Real>(n);
      yv[i] = static_cast<Real>(lam * scale * n + bet);
    });

    const double mom = params.momentum;
    params.running_mean[ci] = static_cast<Real>(
        (1.0 - mom) * params.running_mean[ci] + mom * mean);
    params.running_var[ci] =
        static_cast<Real>((1.0 - mom) * params.running_var[ci] + mom * var);
  }
  ++params.num_updates;
  return out;
}

template <typename Real>
TdBnGrads<Real> tdbn_backward(const TensorT<Real>& grad_y,
                              const TdBnCache<Real>& cache,
                              const TdBnParamsT<Real>& params) {
  if (cache.x_hat.empty()) {
    throw StateError("tdbn_backward: forward cache is missing");
  }
  const Shape s = cache.x_hat.shape();
  if (grad_y.shape() != s ||
      cache.inv_std.size() != static_cast<std::size_t>(s.c) ||
      s.c != params.channels()) {
    throw StateError("tdbn_backward: cache " + s.str() +
                     " does not match gradient " + grad_y.shape().str() +
                     " / parameters");
  }
  const double m = static_cast<double>(s.t) * s.n * s.plane_size();
  const double scale = params.alpha * params.v_th;

  TdBnGrads<Real> g{TensorT<Real>(s),
                    std::vector<Real>(static_cast<std::size_t>(s.c)),
                    std::vector<Real>(static_cast<std::size_t>(s.c))};
  auto gy = grad_y.values();
  auto xh = cache.x_hat.values();
  auto gx = g.input.values();
  for (int c = 0; c < s.c; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for_channel(s, c, [&](std::size_t i) {
      sum_g += gy[i];
      sum_gx += static_cast<double>(gy[i]) * xh[i];
    });
    g.beta[ci] = static_cast<Real>(sum_g);
    g.lambda[ci] = static_cast<Real>(scale * sum_gx);

    // d/dx of lambda*scale*x_hat through mean and variance.
    const double k = params.lambda[ci] * scale * cache.inv_std[ci];
    const double mean_g = sum_g / m;
    const double mean_gx = sum_gx / m;
    for_channel(s, c, [&](std::size_t i) {
      gx[i] = static_cast<Real>(k * (gy[i] - mean_g - xh[i] * mean_gx));
    });
  }
  return g;
}

template <typename Real>
TensorT<Real> tdbn_forward_infer(const TensorT<Real>& x,
                                 const TdBnParamsT<Real>& params) {
  params.validate();
  if (!params.stats_populated()) {
    throw StateError(
        "tdbn_forward_infer: running statistics were never populated");
  }
  const Shape s = x.shape();
  check_channels(s, params, "tdbn_forward_infer");
  TensorT<Real> y(s);
  auto xv = x.values();
  auto yv = y.values();
  const double scale = params.alpha * params.v_th;
  for (int c = 0; c < s.c; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double inv_std =
        1.0 / std::sqrt(static_cast<double>(params.running_var[ci]) +
                        params.eps);
    const double gain = params.lambda[ci] * scale * inv_std;
    const double mean = params.running_mean[ci];
    const double bet = params.beta[ci];
    for_channel(s, c, [&](std::size_t i) {
      yv[i] = static_cast<Real>(gain * (xv[i] - mean) + bet);
    });
  }
  return y;
}

namespace {

template <typename Real>
void check_fusable(const TdBnParamsT<Real>& params, int out_channels) {
  params.validate();
  if (!params.stats_populated()) {
    throw StateError(
        "fuse_into_weights: running statistics were never populated");
  }
  if (out_channels != params.channels()) {
    throw DimensionError("fuse_into_weights: layer has " +
                         std::to_string(out_channels) +
                         " outputs, tdBN has " +
                         std::to_string(params.channels()) + " channels");
  }
}

// Applies W' = g*W and B' = g*(B - mean) + beta row by row, where
// g = lambda * alpha * v_th / sqrt(var + eps).
template <typename Real>
void fold_rows(std::vector<Real>& weight, std::vector<Real>& bias,
               std::size_t row_len, const TdBnParamsT<Real>& params) {
  const double scale = params.alpha * params.v_th;
  for (std::size_t k = 0; k < bias.size(); ++k) {
    const double gain =
        params.lambda[k] * scale /
        std::sqrt(static_cast<double>(params.running_var[k]) + params.eps);
    for (std::size_t j = 0; j < row_len; ++j) {
      Real& w = weight[k * row_len + j];
      w = static_cast<Real>(gain * w);
    }
    bias[k] = static_cast<Real>(
        gain * (static_cast<double>(bias[k]) - params.running_mean[k]) +
        params.beta[k]);
  }
}

}  // namespace

template <typename Real>
ConvParamsT<Real> fuse_into_weights(const ConvParamsT<Real>& conv,
                                    const TdBnParamsT<Real>& params) {
  check_fusable(params, conv.out_channels);
  ConvParamsT<Real> out = conv;
  fold_rows(out.weight, out.bias,
            static_cast<std::size_t>(conv.in_channels) * conv.kernel *
                conv.kernel,
            params);
  return out;
}

template <typename Real>
LinearParamsT<Real> fuse_into_weights(const LinearParamsT<Real>& fc,
                                      const TdBnParamsT<Real>& params) {
  check_fusable(params, fc.out_features);
  LinearParamsT<Real> out = fc;
  fold_rows(out.weight, out.bias, static_cast<std::size_t>(fc.in_features),
            params);
  return out;
}

#define STBP_INSTANTIATE_TDBN(Real)                                          \
  template struct TdBnParamsT<Real>;                                         \
  template TdBnTrainOutput<Real> tdbn_forward_train(const TensorT<Real>&,    \
                                                    TdBnParamsT<Real>&);     \
  template TdBnGrads<Real> tdbn_backward(                                    \
      const TensorT<Real>&, const TdBnCache<Real>&, const TdBnParamsT<Real>&); \
  template TensorT<Real> tdbn_forward_infer(const TensorT<Real>&,            \
                                            const TdBnParamsT<Real>&);       \
  template ConvParamsT<Real> fuse_into_weights(const ConvParamsT<Real>&,     \
                                               const TdBnParamsT<Real>&);    \
  template LinearParamsT<Real> fuse_into_weights(                            \
      const LinearParamsT<Real>&, const TdBnParamsT<Real>&);

STBP_INSTANTIATE_TDBN(float)
STBP_INSTANTIATE_TDBN(double)

}  // namespace stbp
