#pragma once

#include <vector>

#include "stbp/tensor.hpp"

namespace stbp {

// Square-kernel 2-D convolution (cross-correlation, zero padding).
template <typename Real>
struct ConvParamsT {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  std::vector<Real> weight;  // [out_channels, in_channels, kernel, kernel]
  std::vector<Real> bias;    // [out_channels]

  ConvParamsT() = default;
  ConvParamsT(int in_ch, int out_ch, int k, int stride_, int pad)
      : in_channels(in_ch), out_channels(out_ch), kernel(k), stride(stride_),
        padding(pad),
        weight(static_cast<std::size_t>(out_ch) * in_ch * k * k, Real(0)),
        bias(static_cast<std::size_t>(out_ch), Real(0)) {}

  int fan_in() const { return in_channels * kernel * kernel; }
  Real& w(int co, int ci, int kh, int kw) {
    return weight[((static_cast<std::size_t>(co) * in_channels + ci) *
                       kernel +
                   kh) *
                      kernel +
                  kw];
  }
  Real w(int co, int ci, int kh, int kw) const {
    return weight[((static_cast<std::size_t>(co) * in_channels + ci) *
                       kernel +
                   kh) *
                      kernel +
                  kw];
  }
};

// Fully-connected layer over the flattened C*H*W features of each (t, n).
template <typename Real>
struct LinearParamsT {
  int in_features = 0;
  int out_features = 0;
  std::vector<Real> weight;  // [out_features, in_features]
  std::vector<Real> bias;    // [out_features]

  LinearParamsT() = default;
  LinearParamsT(int in_f, int out_f)
      : in_features(in_f), out_features(out_f),
        weight(static_cast<std::size_t>(in_f) * out_f, Real(0)),
        bias(static_cast<std::size_t>(out_f), Real(0)) {}

  int fan_in() const { return in_features; }
};

using ConvParams = ConvParamsT<float>;
using LinearParams = LinearParamsT<float>;

// Output extent along one spatial axis; throws DimensionError when < 1.
int conv_output_extent(int extent, int kernel, int stride, int padding);

// Shape of conv2d(input) without computing it.
template <typename Real>
Shape conv2d_output_shape(const Shape& input, const ConvParamsT<Real>& p);

template <typename Real>
TensorT<Real> conv2d(const TensorT<Real>& input, const ConvParamsT<Real>& p);

template <typename Real>
struct ConvGrads {
  TensorT<Real> input;  // empty when not requested
  std::vector<Real> weight;
  std::vector<Real> bias;
};

template <typename Real>
ConvGrads<Real> conv2d_backward(const TensorT<Real>& grad_output,
                                const TensorT<Real>& input,
                                const ConvParamsT<Real>& p,
                                bool need_input_grad = true);

template <typename Real>
TensorT<Real> linear(const TensorT<Real>& input, const LinearParamsT<Real>& p);

template <typename Real>
struct LinearGrads {
  TensorT<Real> input;
  std::vector<Real> weight;
  std::vector<Real> bias;
};

template <typename Real>
LinearGrads<Real> linear_backward(const TensorT<Real>& grad_output,
                                  const TensorT<Real>& input,
                                  const LinearParamsT<Real>& p,
                                  bool need_input_grad = true);

// Non-overlapping window mean over H and W.
template <typename Real>
TensorT<Real> avg_pool2d(const TensorT<Real>& input, int window);

template <typename Real>
TensorT<Real> avg_pool2d_backward(const TensorT<Real>& grad_output,
                                  const Shape& input_shape, int window);

}  // namespace stbp
