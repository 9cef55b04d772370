#pragma once

#include "stbp/tensor.hpp"

namespace stbp {

// Iterative LIF hyper-parameters.
struct LifHyper {
  double tau_decay = 0.25;  // membrane decay per timestep, in [0, 1)
  double v_th = 1.0;        // firing threshold
  double a = 1.0;           // width of the rectangular surrogate window
  // Drop the reset path (du[t+1]/do[t] = -tau * u[t]) from the backward.
  bool detach_reset = false;
  // Drop every temporal gradient path (leak and reset); ablation only.
  bool temporal_grad = true;

  // Throws ConfigError on out-of-range values.
  void validate() const;
  friend bool operator==(const LifHyper&, const LifHyper&) = default;
};

// How the forward maps membrane potential to output.
enum class FireMode {
  kSpike,  // Heaviside step: spikes in {0, 1}
  kRamp,   // integral of the surrogate: clamp((u - v_th)/a + 1/2, 0, 1)
};

// The firing predicate. Strict inequality; every spike decision goes here.
inline bool fires(double u, double v_th) { return u > v_th; }

// Rectangular surrogate derivative: 1/a inside |u - v_th| < a/2, else 0.
double surrogate_grad(double u, const LifHyper& hyper);

template <typename Real>
struct LifOutput {
  TensorT<Real> spikes;      // o[t]
  TensorT<Real> potentials;  // pre-reset u[t], cached for backward
};

// Runs u[t] = tau * u[t-1] * (1 - o[t-1]) + x[t], o[t] = fire(u[t]) from a
// zero initial state over every (N, C, H, W) position.
template <typename Real>
LifOutput<Real> lif_forward(const TensorT<Real>& x, const LifHyper& hyper,
                            FireMode mode = FireMode::kSpike);

// Backpropagation through time for one LIF layer. `grad_potentials`, when
// given, is an extra gradient injected directly on the cached potentials.
// Returns dL/dx (equal to dL/du since du[t]/dx[t] = 1).
template <typename Real>
TensorT<Real> lif_backward(const TensorT<Real>& grad_spikes,
                           const TensorT<Real>& cached_u,
                           const TensorT<Real>& cached_o,
                           const LifHyper& hyper,
                           const TensorT<Real>* grad_potentials = nullptr);

}  // namespace stbp
