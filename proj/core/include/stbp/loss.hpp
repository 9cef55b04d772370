#pragma once

#include <vector>

#include "stbp/layers.hpp"
#include "stbp/tensor.hpp"

namespace stbp {

// Decoding layer: Q[n] = (1/T) * sum_t (M * flatten(o[t, n])) + bias.
template <typename Real>
MatrixT<Real> decode(const TensorT<Real>& spikes,
                     const LinearParamsT<Real>& decoder);

template <typename Real>
struct DecodeGrads {
  TensorT<Real> input;
  std::vector<Real> weight;
  std::vector<Real> bias;
};

template <typename Real>
DecodeGrads<Real> decode_backward(const MatrixT<Real>& grad_q,
                                  const TensorT<Real>& spikes,
                                  const LinearParamsT<Real>& decoder,
                                  bool need_input_grad = true);

template <typename Real>
struct LossOutput {
  double loss = 0.0;        // batch mean of -sum y log softmax(Q)
  MatrixT<Real> grad_q;     // (softmax(Q) - y) / N
  MatrixT<Real> probabilities;
};

// Softmax cross-entropy with log-sum-exp stabilization. `labels` holds one
// one-hot row per sample; throws NumericError on non-finite logits.
template <typename Real>
LossOutput<Real> softmax_ce(const MatrixT<Real>& q,
                            const MatrixT<Real>& labels);

// Builds the one-hot label matrix for class indices.
template <typename Real>
MatrixT<Real> one_hot(const std::vector<int>& labels, int classes);

}  // namespace stbp
