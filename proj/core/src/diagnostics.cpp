#include "stbp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "stbp/arch.hpp"
#include "stbp/errors.hpp"
#include "stbp/loss.hpp"
#include "stbp/random.hpp"

namespace stbp {

double GradNormProfile::ratio() const {
  if (norms.empty()) return 1.0;
  const auto [lo, hi] = std::minmax_element(norms.begin(), norms.end());
  if (*lo <= 0.0) return std::numeric_limits<double>::infinity();
  return *hi / *lo;
}

double isometric_surrogate_width(double v_th) {
  if (!(v_th > 0.0)) throw ConfigError("v_th must be positive");
  auto phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  const double p = 1.0 - phi(1.0);
  // Gain in units of v_th; strictly decreasing in the width w.
  auto gain = [&](double w) {
    return (phi(1.0 + w / 2) - phi(1.0 - w / 2)) / (w * w * p * (1.0 - p));
  };
  double lo = 0.5;
  double hi = 4.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (gain(mid) > 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) * v_th;
}

GradNormProfile grad_norm_profile(const GradNormOptions& opts) {
  if (opts.depth < 3) throw ConfigError("gradnorm depth must be at least 3");
  if (opts.batch < 1 || opts.repeats < 1 || opts.timesteps < 1) {
    throw ConfigError("gradnorm batch, repeats and timesteps must be >= 1");
  }
  ArchConfig arch;
  arch.name = "plain";
  arch.classes = opts.classes;
  arch.input_channels = 3;
  arch.input_hw = opts.image_size;
  arch.width = opts.width;
  arch.depth = opts.depth;
  arch.use_tdbn = opts.use_tdbn;
  arch.lif.tau_decay = opts.tau_decay;
  arch.lif.v_th = opts.v_th;
  arch.lif.a = opts.surrogate_width > 0.0
                    ? opts.surrogate_width
                    : isometric_surrogate_width(opts.v_th);
  Network net = build_network<float>(arch);
  init_weights(net, opts.seed);

  // Profiled layers: every conv except the encoder (node order = depth order).
  std::vector<int> layers;
  for (int i : net.nodes_of_kind(NodeKind::kConv)) layers.push_back(i);
  layers.erase(layers.begin());

  GradNormProfile profile;
  profile.tau_decay = opts.tau_decay;
  profile.depth = opts.depth;
  profile.norms.assign(layers.size(), 0.0);
  for (int i : layers) profile.layers.push_back(net.node(i).name);

  // Index of each profiled layer's weight inside the parameter list.
  std::vector<std::size_t> weight_slot;
  {
    const auto params = net.parameters();
    for (int i : layers) {
      const std::string want = net.node(i).name + ".weight";
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].name == want) weight_slot.push_back(k);
      }
    }
  }

  const Shape shape{opts.timesteps, opts.batch, 3, opts.image_size,
                    opts.image_size};
  for (int r = 0; r < opts.repeats; ++r) {
    std::mt19937_64 rng(derive_seed(opts.seed, 1000 + r));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> label_dist(0, opts.classes - 1);
    Tensor x(shape);
    const std::size_t per_step = shape.numel() / shape.t;
    for (std::size_t i = 0; i < per_step; ++i) {
      x.storage()[i] = static_cast<float>(normal(rng));
    }
    for (int t = 1; t < shape.t; ++t) {
      std::copy_n(x.storage().begin(), per_step,
                  x.storage().begin() + static_cast<std::ptrdiff_t>(t * per_step));
    }
    std::vector<int> labels(static_cast<std::size_t>(opts.batch));
    for (int& l : labels) l = label_dist(rng);

    auto fwd = forward_pass(net, x, Mode::kTrain);
    const auto loss = softmax_ce(fwd.logits, one_hot<float>(labels, opts.classes));
    const auto grads = backward_pass(net, loss.grad_q, fwd.tape);
    for (std::size_t k = 0; k < weight_slot.size(); ++k) {
      double sq = 0.0;
      for (float g : grads.params[weight_slot[k]]) sq += double(g) * g;
      profile.norms[k] += std::sqrt(sq) / opts.repeats;
    }
  }
  return profile;
}

double stationary_variance_gain(double tau_decay) {
  return 1.0 / (1.0 - tau_decay * tau_decay);
}

VarianceScan membrane_variance_scan(const VarianceScanOptions& opts) {
  if (opts.samples < 2 || opts.timesteps <= opts.burn_in || opts.burn_in < 0) {
    throw ConfigError("variance scan needs samples >= 2 and timesteps > "
                      "burn_in >= 0");
  }
  if (opts.input_variances.empty()) {
    throw ConfigError("variance scan needs at least one input variance");
  }
  const Shape shape{opts.timesteps, opts.samples, 1, 1, 1};
  std::vector<double> z(shape.numel());
  std::mt19937_64 rng(derive_seed(opts.seed, 2));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : z) v = normal(rng);

  VarianceScan scan;
  scan.tau_decay = opts.tau_decay;
  for (double s2 : opts.input_variances) {
    if (!(s2 > 0.0)) throw ConfigError("input variances must be positive");
    const double sigma = std::sqrt(s2);
    LifHyper hyper;
    hyper.tau_decay = opts.tau_decay;
    hyper.v_th = opts.v_th > 0.0 ? opts.v_th : 10.0 * sigma;
    hyper.validate();
    TensorT<double> x(shape);
    for (std::size_t i = 0; i < z.size(); ++i) x.storage()[i] = sigma * z[i];
    const auto out = lif_forward(x, hyper);

    double sum = 0.0;
    double sq = 0.0;
    std::size_t count = 0;
    double spikes = 0.0;
    for (int t = 0; t < shape.t; ++t) {
      for (int n = 0; n < shape.n; ++n) {
        spikes += out.spikes.at(t, n, 0, 0, 0);
        if (t < opts.burn_in) continue;
        const double u = out.potentials.at(t, n, 0, 0, 0);
        sum += u;
        sq += u * u;
        ++count;
      }
    }
    const double mean = sum / static_cast<double>(count);
    VariancePoint p;
    p.sigma2_in = s2;
    p.sigma2_out = sq / static_cast<double>(count) - mean * mean;
    p.v_th = hyper.v_th;
    p.firing_rate = spikes / static_cast<double>(shape.numel());
    scan.points.push_back(p);
  }

  const double k = static_cast<double>(scan.points.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& p : scan.points) {
    mx += p.sigma2_in / k;
    my += p.sigma2_out / k;
  }
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (const auto& p : scan.points) {
    sxx += (p.sigma2_in - mx) * (p.sigma2_in - mx);
    sxy += (p.sigma2_in - mx) * (p.sigma2_out - my);
    syy += (p.sigma2_out - my) * (p.sigma2_out - my);
  }
  if (sxx > 0.0) {
    scan.slope = sxy / sxx;
    scan.intercept = my - scan.slope * mx;
    scan.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  } else {
    scan.slope = mx > 0.0 ? my / mx : 0.0;
    scan.r_squared = 1.0;
  }
  return scan;
}

std::vector<FiringPoint> firing_rate_scan(const FiringScanOptions& opts) {
  if (opts.timesteps < 1 || opts.samples < 1) {
    throw ConfigError("firing scan needs timesteps >= 1 and samples >= 1");
  }
  LifHyper hyper;
  hyper.tau_decay = opts.tau_decay;
  hyper.v_th = opts.v_th;
  hyper.validate();
  const Shape shape{opts.timesteps, opts.samples, 1, 1, 1};
  std::vector<double> z(shape.numel());
  std::mt19937_64 rng(derive_seed(opts.seed, 3));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : z) v = normal(rng);

  std::vector<FiringPoint> points;
  for (double sigma : opts.input_stds) {
    if (!(sigma >= 0.0)) throw ConfigError("input stds must be non-negative");
    TensorT<double> x(shape);
    for (std::size_t i = 0; i < z.size(); ++i) x.storage()[i] = sigma * z[i];
    const auto out = lif_forward(x, hyper);
    FiringPoint p;
    p.sigma_in = sigma;
    p.histogram.assign(static_cast<std::size_t>(opts.timesteps) + 1, 0.0);
    double total = 0.0;
    for (int n = 0; n < shape.n; ++n) {
      int count = 0;
      for (int t = 0; t < shape.t; ++t) {
        count += out.spikes.at(t, n, 0, 0, 0) > 0.0 ? 1 : 0;
      }
      total += count;
      p.histogram[static_cast<std::size_t>(count)] += 1.0 / shape.n;
    }
    p.firing_rate = total / static_cast<double>(shape.numel());
    points.push_back(std::move(p));
  }
  return points;
}

template <typename Real>
SpikeProfile spike_profile_from_tape(const NetworkT<Real>& net,
                                     const Tape<Real>& tape) {
  if (tape.outputs.size() != static_cast<std::size_t>(net.size())) {
    throw StateError("spike profile: tape does not belong to this network");
  }
  SpikeProfile profile;
  double all_spikes = 0.0;
  double all_slots = 0.0;
  for (int i : net.topological_order()) {
    if (net.node(i).kind() != NodeKind::kLif) continue;
    const auto& o = tape.outputs[static_cast<std::size_t>(i)];
    if (o.empty()) throw StateError("spike profile: missing LIF output");
    double spikes = 0.0;
    for (Real v : o.values()) spikes += static_cast<double>(v);
    const Shape s = o.shape();
    const double neurons = static_cast<double>(s.n) * s.sample_size();
    profile.layers.push_back(net.node(i).name);
    profile.spikes_per_neuron.push_back(spikes / neurons);
    profile.rate_per_timestep.push_back(spikes / (neurons * s.t));
    all_spikes += spikes;
    all_slots += neurons * s.t;
  }
  profile.mean_rate = all_slots > 0.0 ? all_spikes / all_slots : 0.0;
  return profile;
}

namespace {

template <typename Real>
bool needs_batch_stats(const NetworkT<Real>& net) {
  if (net.fused()) return false;
  for (const auto& nd : net.nodes()) {
    if (nd.kind() == NodeKind::kTdBn &&
        !nd.template as<TdBnParamsT<Real>>().stats_populated()) {
      return true;
    }
  }
  return false;
}

// Output positions along one axis whose window covers input position i.
std::vector<std::uint64_t> coverage(int in_extent, int out_extent, int kernel,
                                    int stride, int padding) {
  std::vector<std::uint64_t> cover(static_cast<std::size_t>(in_extent), 0);
  for (int o = 0; o < out_extent; ++o) {
    for (int k = 0; k < kernel; ++k) {
      const int i = o * stride - padding + k;
      if (i >= 0 && i < in_extent) ++cover[static_cast<std::size_t>(i)];
    }
  }
  return cover;
}

}  // namespace

template <typename Real>
SpikeProfile spike_profile(const NetworkT<Real>& net, const TensorT<Real>& x) {
  NetworkT<Real> copy = net;
  const Mode mode = needs_batch_stats(net) ? Mode::kTrain : Mode::kInfer;
  auto fwd = forward_pass(copy, x, mode);
  return spike_profile_from_tape(copy, fwd.tape);
}

template <typename Real>
OpCountReport count_ops(const NetworkT<Real>& fused_net,
                        const TensorT<Real>& x, CountMode mode) {
  if (!fused_net.fused()) {
    throw StateError("count_ops requires a fused network");
  }
  NetworkT<Real> net = fused_net;
  auto fwd = forward_pass(net, x, Mode::kInfer);
  const Tape<Real>& tape = fwd.tape;

  OpCountReport report;
  const SpikeProfile profile = spike_profile_from_tape(net, tape);
  report.firing_rates = profile.rate_per_timestep;
  report.mean_firing_rate = profile.mean_rate;

  for (int i : net.topological_order()) {
    const auto& nd = net.node(i);
    const NodeKind kind = nd.kind();
    if (kind != NodeKind::kConv && kind != NodeKind::kLinear &&
        kind != NodeKind::kDecode) {
      continue;
    }
    const int src = nd.inputs.front();
    const auto& in = tape.outputs[static_cast<std::size_t>(src)];
    const Shape s = in.shape();
    LayerOps ops;
    ops.name = nd.name;
    ops.spiking_input = mode == CountMode::kSnn &&
                        net.node(src).kind() == NodeKind::kLif;
    auto active = [&](std::size_t idx) {
      return !ops.spiking_input || in.values()[idx] != Real(0);
    };

    std::uint64_t pairs = 0;
    if (kind == NodeKind::kConv) {
      const auto& p = nd.template as<ConvParamsT<Real>>();
      const int oh = conv_output_extent(s.h, p.kernel, p.stride, p.padding);
      const int ow = conv_output_extent(s.w, p.kernel, p.stride, p.padding);
      const auto cover_h = coverage(s.h, oh, p.kernel, p.stride, p.padding);
      const auto cover_w = coverage(s.w, ow, p.kernel, p.stride, p.padding);
      std::size_t idx = 0;
      for (int t = 0; t < s.t; ++t) {
        for (int n = 0; n < s.n; ++n) {
          for (int c = 0; c < s.c; ++c) {
            for (int h = 0; h < s.h; ++h) {
              for (int w = 0; w < s.w; ++w, ++idx) {
                if (active(idx)) {
                  pairs += cover_h[static_cast<std::size_t>(h)] *
                           cover_w[static_cast<std::size_t>(w)];
                }
              }
            }
          }
        }
      }
      pairs *= static_cast<std::uint64_t>(p.out_channels);
    } else {
      const int outs = kind == NodeKind::kLinear
                           ? nd.template as<LinearParamsT<Real>>().out_features
                           : nd.template as<DecodeOp<Real>>().params.out_features;
      std::uint64_t inputs = 0;
      for (std::size_t idx = 0; idx < in.numel(); ++idx) {
        if (active(idx)) ++inputs;
      }
      pairs = inputs * static_cast<std::uint64_t>(outs);
    }

    ops.additions = pairs;
    ops.multiplications = ops.spiking_input ? 0 : pairs;
    if (kind == NodeKind::kDecode && mode == CountMode::kSnn) {
      ops.multiplications += static_cast<std::uint64_t>(s.n) *
                             nd.template as<DecodeOp<Real>>().params.out_features;
    }
    report.additions += ops.additions;
    report.multiplications += ops.multiplications;
    report.layers.push_back(std::move(ops));
  }
  return report;
}

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.precision(10);
  return out;
}

void finish_csv(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("failed while writing '" + path + "'");
}

}  // namespace

void write_grad_norm_csv(const std::string& path, const GradNormProfile& p) {
  auto out = open_csv(path);
  out << "layer_index,layer,value,tau_decay,depth\n";
  for (std::size_t i = 0; i < p.norms.size(); ++i) {
    out << i << ',' << p.layers[i] << ',' << p.norms[i] << ',' << p.tau_decay
        << ',' << p.depth << '\n';
  }
  finish_csv(out, path);
}

void write_variance_csv(const std::string& path, const VarianceScan& scan) {
  auto out = open_csv(path);
  out << "sigma2_in,sigma2_out,v_th,firing_rate,tau_decay,expected\n";
  const double gain = stationary_variance_gain(scan.tau_decay);
  for (const auto& p : scan.points) {
    out << p.sigma2_in << ',' << p.sigma2_out << ',' << p.v_th << ','
        << p.firing_rate << ',' << scan.tau_decay << ',' << gain * p.sigma2_in
        << '\n';
  }
  finish_csv(out, path);
}

void write_firing_csv(const std::string& path,
                      const std::vector<FiringPoint>& points,
                      double tau_decay) {
  auto out = open_csv(path);
  out << "sigma_in,firing_rate,tau_decay,spike_count,fraction\n";
  for (const auto& p : points) {
    for (std::size_t k = 0; k < p.histogram.size(); ++k) {
      out << p.sigma_in << ',' << p.firing_rate << ',' << tau_decay << ','
          << k << ',' << p.histogram[k] << '\n';
    }
  }
  finish_csv(out, path);
}

void write_op_count_csv(const std::string& path, const OpCountReport& snn,
                        const OpCountReport& ann) {
  auto out = open_csv(path);
  out << "layer_index,layer,spiking_input,snn_additions,snn_multiplications,"
         "ann_additions,ann_multiplications\n";
  for (std::size_t i = 0; i < snn.layers.size(); ++i) {
    const auto& a = ann.layers.at(i);
    const auto& s = snn.layers[i];
    out << i << ',' << s.name << ',' << (s.spiking_input ? 1 : 0) << ','
        << s.additions << ',' << s.multiplications << ',' << a.additions << ','
        << a.multiplications << '\n';
  }
  out << "total,all,," << snn.additions << ',' << snn.multiplications << ','
      << ann.additions << ',' << ann.multiplications << '\n';
  finish_csv(out, path);
}

void write_spike_profile_csv(const std::string& path, const SpikeProfile& p) {
  auto out = open_csv(path);
  out << "layer_index,layer,spikes_per_neuron,rate_per_timestep\n";
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    out << i << ',' << p.layers[i] << ',' << p.spikes_per_neuron[i] << ','
        << p.rate_per_timestep[i] << '\n';
  }
  finish_csv(out, path);
}

#define STBP_INSTANTIATE_DIAG(Real)                                          \
  template SpikeProfile spike_profile(const NetworkT<Real>&,                 \
                                      const TensorT<Real>&);                 \
  template SpikeProfile spike_profile_from_tape(const NetworkT<Real>&,       \
                                                const Tape<Real>&);          \
  template OpCountReport count_ops(const NetworkT<Real>&,                    \
                                   const TensorT<Real>&, CountMode);

STBP_INSTANTIATE_DIAG(float)
STBP_INSTANTIATE_DIAG(double)

}  // namespace stbp
