#pragma once

#include <cstdint>
#include <vector>

#include "stbp/layers.hpp"
#include "stbp/tensor.hpp"

namespace stbp {

// Threshold-dependent batch normalization parameters for C channels.
//
// Training normalizes each channel with statistics pooled over all of
// (T, N, H, W), then rescales to standard deviation alpha * v_th:
//   y = lambda * alpha * v_th * (x - mean) / sqrt(var + eps) + beta
template <typename Real>
struct TdBnParamsT {
  std::vector<Real> lambda;
  std::vector<Real> beta;
  std::vector<Real> running_mean;
  std::vector<Real> running_var;
  double alpha = 1.0;
  double v_th = 1.0;
  double eps = 1e-5;
  double momentum = 0.1;
  // Number of training batches folded into the running statistics.
  std::int64_t num_updates = 0;

  TdBnParamsT() = default;
  explicit TdBnParamsT(int channels, double alpha_ = 1.0, double v_th_ = 1.0)
      : lambda(static_cast<std::size_t>(channels), Real(1)),
        beta(static_cast<std::size_t>(channels), Real(0)),
        running_mean(static_cast<std::size_t>(channels), Real(0)),
        running_var(static_cast<std::size_t>(channels), Real(1)),
        alpha(alpha_), v_th(v_th_) {}

  int channels() const { return static_cast<int>(lambda.size()); }
  bool stats_populated() const { return num_updates > 0; }
  // Throws ConfigError/DimensionError on inconsistent fields.
  void validate() const;
};

using TdBnParams = TdBnParamsT<float>;

template <typename Real>
struct TdBnCache {
  TensorT<Real> x_hat;         // (x - mean) / sqrt(var + eps), unscaled
  std::vector<Real> inv_std;   // 1 / sqrt(var + eps) per channel
  std::vector<double> mean;    // batch statistics, per channel
  std::vector<double> var;
};

template <typename Real>
struct TdBnTrainOutput {
  TensorT<Real> y;
  TdBnCache<Real> cache;
};

// Training-mode normalization; updates the running statistics in `params`.
template <typename Real>
TdBnTrainOutput<Real> tdbn_forward_train(const TensorT<Real>& x,
                                         TdBnParamsT<Real>& params);

template <typename Real>
struct TdBnGrads {
  TensorT<Real> input;
  std::vector<Real> lambda;
  std::vector<Real> beta;
};

// Exact gradient of the training transform, including the mean and
// variance paths through the batch statistics.
template <typename Real>
TdBnGrads<Real> tdbn_backward(const TensorT<Real>& grad_y,
                              const TdBnCache<Real>& cache,
                              const TdBnParamsT<Real>& params);

// Inference with the running statistics; no state is touched.
template <typename Real>
TensorT<Real> tdbn_forward_infer(const TensorT<Real>& x,
                                 const TdBnParamsT<Real>& params);

// Batchnorm-scale-fusion: folds the inference-time normalization into the
// preceding layer so that conv2d(fused) == tdbn_forward_infer(conv2d(conv)).
template <typename Real>
ConvParamsT<Real> fuse_into_weights(const ConvParamsT<Real>& conv,
                                    const TdBnParamsT<Real>& params);
template <typename Real>
LinearParamsT<Real> fuse_into_weights(const LinearParamsT<Real>& fc,
                                      const TdBnParamsT<Real>& params);

}  // namespace stbp
