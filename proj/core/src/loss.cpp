#include "stbp/loss.hpp"

#include <cmath>
#include <string>

#include "stbp/errors.hpp"

namespace stbp {

template <typename Real>
MatrixT<Real> decode(const TensorT<Real>& spikes,
                     const LinearParamsT<Real>& decoder) {
  const TensorT<Real> per_step = linear(spikes, decoder);
  const Shape s = per_step.shape();
  MatrixT<Real> q(s.n, decoder.out_features);
  const double inv_t = 1.0 / s.t;
  for (int n = 0; n < s.n; ++n) {
    for (int k = 0; k < decoder.out_features; ++k) {
      double acc = 0.0;
      for (int t = 0; t < s.t; ++t) acc += per_step.at(t, n, k, 0, 0);
      q(n, k) = static_cast<Real>(acc * inv_t);
    }
  }
  return q;
}

template <typename Real>
DecodeGrads<Real> decode_backward(const MatrixT<Real>& grad_q,
                                  const TensorT<Real>& spikes,
                                  const LinearParamsT<Real>& decoder,
                                  bool need_input_grad) {
  const Shape s = spikes.shape();
  if (grad_q.rows() != s.n || grad_q.cols() != decoder.out_features) {
    throw DimensionError("decode_backward: grad_Q is [" +
                         std::to_string(grad_q.rows()) + "," +
                         std::to_string(grad_q.cols()) + "], expected [" +
                         std::to_string(s.n) + "," +
                         std::to_string(decoder.out_features) + "]");
  }
  // Q averages the per-step linear outputs, so each step sees grad_Q / T.
  TensorT<Real> grad_steps(Shape{s.t, s.n, decoder.out_features, 1, 1});
  const Real inv_t = Real(1) / static_cast<Real>(s.t);
  for (int t = 0; t < s.t; ++t) {
    for (int n = 0; n < s.n; ++n) {
      for (int k = 0; k < decoder.out_features; ++k) {
        grad_steps.at(t, n, k, 0, 0) = grad_q(n, k) * inv_t;
      }
    }
  }
  LinearGrads<Real> lg =
      linear_backward(grad_steps, spikes, decoder, need_input_grad);
  return {std::move(lg.input), std::move(lg.weight), std::move(lg.bias)};
}

template <typename Real>
LossOutput<Real> softmax_ce(const MatrixT<Real>& q,
                            const MatrixT<Real>& labels) {
  if (q.rows() != labels.rows() || q.cols() != labels.cols() ||
      q.rows() < 1) {
    throw DimensionError("softmax_ce: logits [" + std::to_string(q.rows()) +
                         "," + std::to_string(q.cols()) + "] vs labels [" +
                         std::to_string(labels.rows()) + "," +
                         std::to_string(labels.cols()) + "]");
  }
  LossOutput<Real> out;
  out.grad_q = MatrixT<Real>(q.rows(), q.cols());
  out.probabilities = MatrixT<Real>(q.rows(), q.cols());
  const double inv_n = 1.0 / q.rows();
  double total = 0.0;
  for (int n = 0; n < q.rows(); ++n) {
    double max_q = -INFINITY;
    double label_sum = 0.0;
    for (int k = 0; k < q.cols(); ++k) {
      const double v = q(n, k);
      if (!std::isfinite(v)) {
        throw NumericError("softmax_ce: non-finite logit at [" +
                           std::to_string(n) + "," + std::to_string(k) + "]");
      }
      const double y = labels(n, k);
      if (y != 0.0 && y != 1.0) {
        throw DataError("softmax_ce: label row " + std::to_string(n) +
                        " is not one-hot");
      }
      label_sum += y;
      max_q = std::max(max_q, v);
    }
    if (label_sum != 1.0) {
      throw DataError("softmax_ce: label row " + std::to_string(n) +
                      " is not one-hot");
    }
    double z = 0.0;
    for (int k = 0; k < q.cols(); ++k) z += std::exp(q(n, k) - max_q);
    const double log_z = max_q + std::log(z);
    for (int k = 0; k < q.cols(); ++k) {
      const double log_p = q(n, k) - log_z;
      const double p = std::exp(log_p);
      const double y = labels(n, k);
      if (y != 0.0) total -= y * log_p;
      out.probabilities(n, k) = static_cast<Real>(p);
      out.grad_q(n, k) = static_cast<Real>((p - y) * inv_n);
    }
  }
  out.loss = total * inv_n;
  return out;
}

template <typename Real>
MatrixT<Real> one_hot(const std::vector<int>& labels, int classes) {
  MatrixT<Real> m(static_cast<int>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw DataError("label " + std::to_string(labels[i]) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
    m(static_cast<int>(i), labels[i]) = Real(1);
  }
  return m;
}

#define STBP_INSTANTIATE_LOSS(Real)                                          \
  template MatrixT<Real> decode(const TensorT<Real>&,                        \
                                const LinearParamsT<Real>&);                 \
  template DecodeGrads<Real> decode_backward(                                \
      const MatrixT<Real>&, const TensorT<Real>&, const LinearParamsT<Real>&, \
      bool);                                                                 \
  template LossOutput<Real> softmax_ce(const MatrixT<Real>&,                 \
                                       const MatrixT<Real>&);                \
  template MatrixT<Real> one_hot(const std::vector<int>&, int);

STBP_INSTANTIATE_LOSS(float)
STBP_INSTANTIATE_LOSS(double)

}  // namespace stbp
