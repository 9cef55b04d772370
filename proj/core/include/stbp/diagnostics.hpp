#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stbp/network.hpp"

namespace stbp {

// ---- Gradient norms through a plain conv stack -------------------------

struct GradNormOptions {
  int depth = 20;  // weighted layers including encoder and decoder
  double tau_decay = 0.0;
  int batch = 8;
  std::uint64_t seed = 1;
  bool use_tdbn = true;
  int width = 16;
  int image_size = 8;
  int timesteps = 4;
  int classes = 10;
  int repeats = 1;  // independent batches averaged per layer
  double v_th = 1.0;
  double surrogate_width = 0.0;  // <= 0 selects isometric_surrogate_width
};

struct GradNormProfile {
  std::vector<std::string> layers;  // hidden conv layers, input to output
  std::vector<double> norms;        // mean L2 norm of the weight gradient
  double tau_decay = 0.0;
  int depth = 0;

  // max/min over layers; infinity when some norm is zero.
  double ratio() const;
};

// Surrogate width a for which one tdBN-normalized LIF layer preserves the
// backward gradient norm: with u ~ N(0, v_th^2) and firing probability p,
// E[h'(u)^2] * v_th^2 / (p (1 - p)) = 1. About 1.796 * v_th.
double isometric_surrogate_width(double v_th);

// At-init profile on random Gaussian images and random labels. The first
// (encoding) and last (decoding) layers are excluded.
GradNormProfile grad_norm_profile(const GradNormOptions& opts);

// ---- Membrane variance of a single LIF layer -----------------------------

struct VarianceScanOptions {
  std::vector<double> input_variances{0.25, 1.0, 4.0};
  double tau_decay = 0.25;
  // Threshold; <= 0 selects 10 * sigma_in per point (no-spike regime).
  double v_th = 0.0;
  int samples = 4000;  // neurons
  int timesteps = 64;
  int burn_in = 16;    // leading steps excluded from the estimate
  std::uint64_t seed = 1;
};

struct VariancePoint {
  double sigma2_in = 0.0;
  double sigma2_out = 0.0;
  double v_th = 0.0;
  double firing_rate = 0.0;  // spikes per neuron per timestep
};

struct VarianceScan {
  std::vector<VariancePoint> points;
  double tau_decay = 0.0;
  // Least squares sigma2_out = slope * sigma2_in + intercept.
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

VarianceScan membrane_variance_scan(const VarianceScanOptions& opts);

// Stationary variance factor of u = x + tau * u_prev: 1 / (1 - tau^2).
double stationary_variance_gain(double tau_decay);

// ---- Firing rate against input spread ------------------------------------

struct FiringScanOptions {
  std::vector<double> input_stds{0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0};
  double tau_decay = 0.25;
  double v_th = 1.0;
  int timesteps = 8;
  int samples = 4000;
  std::uint64_t seed = 1;
};

struct FiringPoint {
  double sigma_in = 0.0;
  double firing_rate = 0.0;        // spikes per neuron per timestep
  std::vector<double> histogram;   // fraction of neurons with k spikes, k=0..T
};

// The same standard-normal draws are rescaled for every sigma.
std::vector<FiringPoint> firing_rate_scan(const FiringScanOptions& opts);

// ---- Per-layer spiking activity ------------------------------------------

struct SpikeProfile {
  std::vector<std::string> layers;         // LIF nodes in execution order
  std::vector<double> spikes_per_neuron;   // mean spike count over T
  std::vector<double> rate_per_timestep;   // spikes_per_neuron / T
  double mean_rate = 0.0;                  // pooled over every LIF neuron
};

// Runs inference on `x`. An unfused network whose running statistics are
// unpopulated is evaluated with batch statistics on a private copy.
template <typename Real>
SpikeProfile spike_profile(const NetworkT<Real>& net, const TensorT<Real>& x);

// Summarizes the LIF outputs of an existing forward tape.
template <typename Real>
SpikeProfile spike_profile_from_tape(const NetworkT<Real>& net,
                                     const Tape<Real>& tape);

// ---- Operation accounting ------------------------------------------------

enum class CountMode {
  kSnn,  // event-driven: one addition per (spike, reachable weight)
  kAnn,  // dense multiply-accumulate for every layer
};

struct LayerOps {
  std::string name;
  bool spiking_input = false;
  std::uint64_t additions = 0;
  std::uint64_t multiplications = 0;
};

struct OpCountReport {
  std::uint64_t additions = 0;
  std::uint64_t multiplications = 0;
  std::vector<LayerOps> layers;      // weighted layers in execution order
  std::vector<double> firing_rates;  // per LIF layer, spikes/(neurons*T)
  double mean_firing_rate = 0.0;
};

// Requires a fused network. Hidden layers fed by LIF spikes cost additions
// only; layers fed by real values (network input, pooled spikes) cost one
// multiply and one add per weight-input pair inside the receptive field.
// The decoder adds `classes` multiplications per sample for the 1/T average.
// Bias additions, pooling and junction sums are not counted.
template <typename Real>
OpCountReport count_ops(const NetworkT<Real>& fused_net,
                        const TensorT<Real>& x,
                        CountMode mode = CountMode::kSnn);

// ---- CSV output -----------------------------------------------------------

void write_grad_norm_csv(const std::string& path, const GradNormProfile& p);
void write_variance_csv(const std::string& path, const VarianceScan& scan);
void write_firing_csv(const std::string& path,
                      const std::vector<FiringPoint>& points,
                      double tau_decay);
void write_op_count_csv(const std::string& path, const OpCountReport& snn,
                        const OpCountReport& ann);
void write_spike_profile_csv(const std::string& path, const SpikeProfile& p);

}  // namespace stbp
