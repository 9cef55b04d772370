#include "stbp/layers.hpp"

#include <algorithm>
#include <string>

#include "stbp/errors.hpp"

namespace stbp {

int conv_output_extent(int extent, int kernel, int stride, int padding) {
  if (kernel < 1 || stride < 1 || padding < 0) {
    throw DimensionError("invalid convolution geometry: kernel " +
                         std::to_string(kernel) + ", stride " +
                         std::to_string(stride) + ", padding " +
                         std::to_string(padding));
  }
  const int span = extent + 2 * padding - kernel;
  if (span < 0) {
    throw DimensionError("kernel " + std::to_string(kernel) +
                         " larger than padded extent " +
                         std::to_string(extent + 2 * padding));
  }
  return span / stride + 1;
}

namespace {

template <typename Real>
void check_conv_params(const ConvParamsT<Real>& p) {
  const std::size_t expected =
      static_cast<std::size_t>(p.out_channels) * p.in_channels * p.kernel *
      p.kernel;
  if (p.in_channels < 1 || p.out_channels < 1 || p.weight.size() != expected ||
      p.bias.size() != static_cast<std::size_t>(p.out_channels)) {
    throw DimensionError(
        "conv params inconsistent: [" + std::to_string(p.out_channels) + "," +
        std::to_string(p.in_channels) + "," + std::to_string(p.kernel) + "," +
        std::to_string(p.kernel) + "] with " +
        std::to_string(p.weight.size()) + " weights and " +
        std::to_string(p.bias.size()) + " biases");
  }
}

// Valid output range [lo, hi) along one axis for kernel tap k, so that
// in = out * stride - padding + k stays inside [0, extent).
struct TapRange {
  int lo;
  int hi;
};

TapRange tap_range(int out_extent, int in_extent, int stride, int padding,
                   int k) {
  int lo = 0;
  const int offset = k - padding;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  int hi = 0;
  if (in_extent - 1 - offset >= 0) hi = (in_extent - 1 - offset) / stride + 1;
  hi = std::min(hi, out_extent);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

}  // namespace

template <typename Real>
Shape conv2d_output_shape(const Shape& input, const ConvParamsT<Real>& p) {
  if (input.c != p.in_channels) {
    throw DimensionError("conv2d: input " + input.str() + " has " +
                         std::to_string(input.c) + " channels, kernel [" +
                         std::to_string(p.out_channels) + "," +
                         std::to_string(p.in_channels) + "," +
                         std::to_string(p.kernel) + "," +
                         std::to_string(p.kernel) + "] expects " +
                         std::to_string(p.in_channels));
  }
  Shape out = input;
  out.c = p.out_channels;
  out.h = conv_output_extent(input.h, p.kernel, p.stride, p.padding);
  out.w = conv_output_extent(input.w, p.kernel, p.stride, p.padding);
  return out;
}

template <typename Real>
TensorT<Real> conv2d(const TensorT<Real>& input, const ConvParamsT<Real>& p) {
  check_conv_params(p);
  const Shape in_s = input.shape();
  const Shape out_s = conv2d_output_shape(in_s, p);
  TensorT<Real> out(out_s);
  const int k = p.kernel;
  const std::size_t in_plane = in_s.plane_size();
  const std::size_t out_plane = out_s.plane_size();

  for (int t = 0; t < in_s.t; ++t) {
    for (int n = 0; n < in_s.n; ++n) {
      auto src = input.sample(t, n);
      auto dst = out.sample(t, n);
      for (int co = 0; co < p.out_channels; ++co) {
        Real* o = dst.data() + co * out_plane;
        std::fill(o, o + out_plane, p.bias[static_cast<std::size_t>(co)]);
        for (int ci = 0; ci < p.in_channels; ++ci) {
          const Real* x = src.data() + ci * in_plane;
          for (int kh = 0; kh < k; ++kh) {
            const TapRange rh =
                tap_range(out_s.h, in_s.h, p.stride, p.padding, kh);
            for (int kw = 0; kw < k; ++kw) {
              const TapRange rw =
                  tap_range(out_s.w, in_s.w, p.stride, p.padding, kw);
              const Real wv = p.w(co, ci, kh, kw);
              if (wv == Real(0)) continue;
              for (int oh = rh.lo; oh < rh.hi; ++oh) {
                const int ih = oh * p.stride - p.padding + kh;
                const Real* xrow = x + static_cast<std::size_t>(ih) * in_s.w;
                Real* orow = o + static_cast<std::size_t>(oh) * out_s.w;
                for (int ow = rw.lo; ow < rw.hi; ++ow) {
                  orow[ow] += wv * xrow[ow * p.stride - p.padding + kw];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename Real>
ConvGrads<Real> conv2d_backward(const TensorT<Real>& grad_output,
                                const TensorT<Real>& input,
                                const ConvParamsT<Real>& p,
                                bool need_input_grad) {
  check_conv_params(p);
  const Shape in_s = input.shape();
  const Shape out_s = conv2d_output_shape(in_s, p);
  if (grad_output.shape() != out_s) {
    throw DimensionError("conv2d_backward: grad " +
                         grad_output.shape().str() + " vs output " +
                         out_s.str());
  }
  ConvGrads<Real> g;
  g.weight.assign(p.weight.size(), Real(0));
  g.bias.assign(p.bias.size(), Real(0));
  if (need_input_grad) g.input = TensorT<Real>(in_s);

  std::vector<double> acc_w(p.weight.size(), 0.0);
  std::vector<double> acc_b(p.bias.size(), 0.0);
  const int k = p.kernel;
  const std::size_t in_plane = in_s.plane_size();
  const std::size_t out_plane = out_s.plane_size();

  for (int t = 0; t < in_s.t; ++t) {
    for (int n = 0; n < in_s.n; ++n) {
      auto src = input.sample(t, n);
      auto gout = grad_output.sample(t, n);
      Real* gin = need_input_grad ? g.input.sample(t, n).data() : nullptr;
      for (int co = 0; co < p.out_channels; ++co) {
        const Real* go = gout.data() + co * out_plane;
        double sb = 0.0;
        for (std::size_t i = 0; i < out_plane; ++i) sb += go[i];
        acc_b[static_cast<std::size_t>(co)] += sb;
        for (int ci = 0; ci < p.in_channels; ++ci) {
          const Real* x = src.data() + ci * in_plane;
          Real* gx = gin ? gin + ci * in_plane : nullptr;
          for (int kh = 0; kh < k; ++kh) {
            const TapRange rh =
                tap_range(out_s.h, in_s.h, p.stride, p.padding, kh);
            for (int kw = 0; kw < k; ++kw) {
              const TapRange rw =
                  tap_range(out_s.w, in_s.w, p.stride, p.padding, kw);
              const Real wv = p.w(co, ci, kh, kw);
              double sw = 0.0;
              for (int oh = rh.lo; oh < rh.hi; ++oh) {
                const int ih = oh * p.stride - p.padding + kh;
                const std::size_t xoff = static_cast<std::size_t>(ih) * in_s.w;
                const Real* grow = go + static_cast<std::size_t>(oh) * out_s.w;
                for (int ow = rw.lo; ow < rw.hi; ++ow) {
                  const std::size_t xi =
                      xoff + static_cast<std::size_t>(ow * p.stride -
                                                      p.padding + kw);
                  sw += static_cast<double>(grow[ow]) * x[xi];
                  if (gx) gx[xi] += grow[ow] * wv;
                }
              }
              acc_w[((static_cast<std::size_t>(co) * p.in_channels + ci) * k +
                     kh) *
                        k +
                    kw] += sw;
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < acc_w.size(); ++i) {
    g.weight[i] = static_cast<Real>(acc_w[i]);
  }
  for (std::size_t i = 0; i < acc_b.size(); ++i) {
    g.bias[i] = static_cast<Real>(acc_b[i]);
  }
  return g;
}

namespace {

template <typename Real>
void check_linear(const Shape& in_s, const LinearParamsT<Real>& p) {
  if (p.weight.size() !=
          static_cast<std::size_t>(p.in_features) * p.out_features ||
      p.bias.size() != static_cast<std::size_t>(p.out_features) ||
      p.out_features < 1) {
    throw DimensionError("linear params inconsistent: [" +
                         std::to_string(p.out_features) + "," +
                         std::to_string(p.in_features) + "]");
  }
  if (in_s.sample_size() != static_cast<std::size_t>(p.in_features)) {
    throw DimensionError("linear: input " + in_s.str() + " flattens to " +
                         std::to_string(in_s.sample_size()) +
                         " features, weight [" +
                         std::to_string(p.out_features) + "," +
                         std::to_string(p.in_features) + "] expects " +
                         std::to_string(p.in_features));
  }
}

}  // namespace

template <typename Real>
TensorT<Real> linear(const TensorT<Real>& input,
                     const LinearParamsT<Real>& p) {
  const Shape in_s = input.shape();
  check_linear(in_s, p);
  TensorT<Real> out(Shape{in_s.t, in_s.n, p.out_features, 1, 1});
  const auto d_in = static_cast<std::size_t>(p.in_features);
  for (int t = 0; t < in_s.t; ++t) {
    for (int n = 0; n < in_s.n; ++n) {
      auto x = input.sample(t, n);
      auto y = out.sample(t, n);
      for (int o = 0; o < p.out_features; ++o) {
        const Real* wr = p.weight.data() + static_cast<std::size_t>(o) * d_in;
        Real acc = p.bias[static_cast<std::size_t>(o)];
        for (std::size_t i = 0; i < d_in; ++i) acc += wr[i] * x[i];
        y[static_cast<std::size_t>(o)] = acc;
      }
    }
  }
  return out;
}

template <typename Real>
LinearGrads<Real> linear_backward(const TensorT<Real>& grad_output,
                                  const TensorT<Real>& input,
                                  const LinearParamsT<Real>& p,
                                  bool need_input_grad) {
  const Shape in_s = input.shape();
  check_linear(in_s, p);
  const Shape out_s{in_s.t, in_s.n, p.out_features, 1, 1};
  if (grad_output.shape() != out_s) {
    throw DimensionError("linear_backward: grad " + grad_output.shape().str() +
                         " vs output " + out_s.str());
  }
  LinearGrads<Real> g;
  if (need_input_grad) g.input = TensorT<Real>(in_s);
  std::vector<double> acc_w(p.weight.size(), 0.0);
  std::vector<double> acc_b(p.bias.size(), 0.0);
  const auto d_in = static_cast<std::size_t>(p.in_features);
  for (int t = 0; t < in_s.t; ++t) {
    for (int n = 0; n < in_s.n; ++n) {
      auto x = input.sample(t, n);
      auto gy = grad_output.sample(t, n);
      for (int o = 0; o < p.out_features; ++o) {
        const Real go = gy[static_cast<std::size_t>(o)];
        acc_b[static_cast<std::size_t>(o)] += go;
        if (go == Real(0)) continue;
        double* aw = acc_w.data() + static_cast<std::size_t>(o) * d_in;
        for (std::size_t i = 0; i < d_in; ++i) {
          aw[i] += static_cast<double>(go) * x[i];
        }
        if (need_input_grad) {
          const Real* wr =
              p.weight.data() + static_cast<std::size_t>(o) * d_in;
          auto gx = g.input.sample(t, n);
          for (std::size_t i = 0; i < d_in; ++i) gx[i] += go * wr[i];
        }
      }
    }
  }
  g.weight.assign(acc_w.begin(), acc_w.end());
  g.bias.assign(acc_b.begin(), acc_b.end());
  return g;
}

template <typename Real>
TensorT<Real> avg_pool2d(const TensorT<Real>& input, int window) {
  const Shape in_s = input.shape();
  if (window < 1 || in_s.h % window != 0 || in_s.w % window != 0) {
    throw DimensionError("avg_pool2d: window " + std::to_string(window) +
                         " does not divide spatial dims of " + in_s.str());
  }
  Shape out_s = in_s;
  out_s.h /= window;
  out_s.w /= window;
  TensorT<Real> out(out_s);
  const double scale = 1.0 / (static_cast<double>(window) * window);
  for (int t = 0; t < in_s.t; ++t) {
    for (int n = 0; n < in_s.n; ++n) {
      for (int c = 0; c < in_s.c; ++c) {
        for (int oh = 0; oh < out_s.h; ++oh) {
          for (int ow = 0; ow < out_s.w; ++ow) {
            double acc = 0.0;
            for (int dh = 0; dh < window; ++dh) {
              for (int dw = 0; dw < window; ++dw) {
                acc += input.at(t, n, c, oh * window + dh, ow * window + dw);
              }
            }
            out.at(t, n, c, oh, ow) = static_cast<Real>(acc * scale);
          }
        }
      }
    }
  }
  return out;
}

template <typename Real>
TensorT<Real> avg_pool2d_backward(const TensorT<Real>& grad_output,
                                  const Shape& input_shape, int window) {
  Shape out_s = input_shape;
  if (window < 1 || out_s.h % window != 0 || out_s.w % window != 0) {
    throw DimensionError("avg_pool2d_backward: window " +
                         std::to_string(window) + " does not divide " +
                         input_shape.str());
  }
  out_s.h /= window;
  out_s.w /= window;
  if (grad_output.shape() != out_s) {
    throw DimensionError("avg_pool2d_backward: grad " +
                         grad_output.shape().str() + " vs output " +
                         out_s.str());
  }
  TensorT<Real> g(input_shape);
  const Real scale = Real(1) / static_cast<Real>(window * window);
  for (int t = 0; t < input_shape.t; ++t) {
    for (int n = 0; n < input_shape.n; ++n) {
      for (int c = 0; c < input_shape.c; ++c) {
        for (int h = 0; h < input_shape.h; ++h) {
          for (int w = 0; w < input_shape.w; ++w) {
            g.at(t, n, c, h, w) =
                grad_output.at(t, n, c, h / window, w / window) * scale;
          }
        }
      }
    }
  }
  return g;
}

#define STBP_INSTANTIATE_LAYERS(Real)                                        \
  template struct ConvParamsT<Real>;                                         \
  template struct LinearParamsT<Real>;                                       \
  template Shape conv2d_output_shape(const Shape&, const ConvParamsT<Real>&); \
  template TensorT<Real> conv2d(const TensorT<Real>&,                        \
                                const ConvParamsT<Real>&);                   \
  template ConvGrads<Real> conv2d_backward(                                  \
      const TensorT<Real>&, const TensorT<Real>&, const ConvParamsT<Real>&,  \
      bool);                                                                 \
  template TensorT<Real> linear(const TensorT<Real>&,                        \
                                const LinearParamsT<Real>&);                 \
  template LinearGrads<Real> linear_backward(                                \
      const TensorT<Real>&, const TensorT<Real>&,                            \
      const LinearParamsT<Real>&, bool);                                     \
  template TensorT<Real> avg_pool2d(const TensorT<Real>&, int);              \
  template TensorT<Real> avg_pool2d_backward(const TensorT<Real>&,           \
                                             const Shape&, int);

STBP_INSTANTIATE_LAYERS(float)
STBP_INSTANTIATE_LAYERS(double)

}  // namespace stbp
