#include "stbp/neuron.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stbp/errors.hpp"

namespace stbp {

void LifHyper::validate() const {
  if (!(tau_decay >= 0.0 && tau_decay < 1.0)) {
    throw ConfigError("tau_decay must lie in [0, 1), got " +
                      std::to_string(tau_decay));
  }
  if (!(v_th > 0.0)) {
    throw ConfigError("v_th must be positive, got " + std::to_string(v_th));
  }
  if (!(a > 0.0)) {
    throw ConfigError("surrogate width a must be positive, got " +
                      std::to_string(a));
  }
}

double surrogate_grad(double u, const LifHyper& hyper) {
  return std::abs(u - hyper.v_th) < hyper.a / 2.0 ? 1.0 / hyper.a : 0.0;
}

template <typename Real>
LifOutput<Real> lif_forward(const TensorT<Real>& x, const LifHyper& hyper,
                            FireMode mode) {
  hyper.validate();
  const Shape s = x.shape();
  LifOutput<Real> out{TensorT<Real>(s), TensorT<Real>(s)};
  const std::size_t frame = static_cast<std::size_t>(s.n) * s.sample_size();
  const Real tau = static_cast<Real>(hyper.tau_decay);
  const Real v_th = static_cast<Real>(hyper.v_th);
  const Real inv_a = static_cast<Real>(1.0 / hyper.a);

  auto xs = x.values();
  auto os = out.spikes.values();
  auto us = out.potentials.values();
  for (std::size_t i = 0; i < frame; ++i) {
    Real u_prev = 0;
    Real o_prev = 0;
    for (int t = 0; t < s.t; ++t) {
      const std::size_t idx = static_cast<std::size_t>(t) * frame + i;
      const Real u = tau * u_prev * (Real(1) - o_prev) + xs[idx];
      Real o;
      if (mode == FireMode::kSpike) {
        o = fires(u, v_th) ? Real(1) : Real(0);
      } else {
        o = std::clamp((u - v_th) * inv_a + Real(0.5), Real(0), Real(1));
      }
      us[idx] = u;
      os[idx] = o;
      u_prev = u;
      o_prev = o;
    }
  }
  return out;
}

template <typename Real>
TensorT<Real> lif_backward(const TensorT<Real>& grad_spikes,
                           const TensorT<Real>& cached_u,
                           const TensorT<Real>& cached_o,
                           const LifHyper& hyper,
                           const TensorT<Real>* grad_potentials) {
  if (cached_u.empty() || cached_o.empty()) {
    throw StateError("lif_backward: forward cache is missing");
  }
  const Shape s = cached_u.shape();
  if (cached_o.shape() != s || grad_spikes.shape() != s ||
      (grad_potentials && grad_potentials->shape() != s)) {
    throw DimensionError("lif_backward: shapes disagree: grad " +
                         grad_spikes.shape().str() + ", cache " + s.str());
  }
  TensorT<Real> grad_x(s);
  const std::size_t frame = static_cast<std::size_t>(s.n) * s.sample_size();
  const Real tau = hyper.temporal_grad ? static_cast<Real>(hyper.tau_decay)
                                       : Real(0);
  const bool reset_path = hyper.temporal_grad && !hyper.detach_reset;

  auto go = grad_spikes.values();
  auto us = cached_u.values();
  auto os = cached_o.values();
  auto gx = grad_x.values();
  for (std::size_t i = 0; i < frame; ++i) {
    Real g_next = 0;  // dL/du[t+1]
    for (int t = s.t - 1; t >= 0; --t) {
      const std::size_t idx = static_cast<std::size_t>(t) * frame + i;
      const Real u = us[idx];
      const Real sg = static_cast<Real>(surrogate_grad(u, hyper));
      // dL/do[t]: spatial term plus the reset path through u[t+1].
      Real grad_o = go[idx];
      if (reset_path) grad_o += g_next * (-tau * u);
      Real g_u = grad_o * sg + g_next * tau * (Real(1) - os[idx]);
      if (grad_potentials) g_u += grad_potentials->values()[idx];
      gx[idx] = g_u;
      g_next = g_u;
    }
  }
  return grad_x;
}

#define STBP_INSTANTIATE_NEURON(Real)                                      \
  template LifOutput<Real> lif_forward(const TensorT<Real>&,               \
                                       const LifHyper&, FireMode);         \
  template TensorT<Real> lif_backward(                                     \
      const TensorT<Real>&, const TensorT<Real>&, const TensorT<Real>&,    \
      const LifHyper&, const TensorT<Real>*);

STBP_INSTANTIATE_NEURON(float)
STBP_INSTANTIATE_NEURON(double)

}  // namespace stbp
