#include "stbp/tensor.hpp"

#include <algorithm>

#include "stbp/errors.hpp"

namespace stbp {

std::string Shape::str() const {
  return "[" + std::to_string(t) + "," + std::to_string(n) + "," +
         std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + "]";
}

void validate_shape(const Shape& shape) {
  if (shape.t < 1 || shape.n < 1 || shape.c < 1 || shape.h < 1 ||
      shape.w < 1) {
    throw DimensionError("tensor extents must all be >= 1, got " +
                         shape.str());
  }
}

template <typename Real>
TensorT<Real>::TensorT(Shape shape, Real fill)
    : shape_(shape), values_((validate_shape(shape), shape.numel()), fill) {}

template <typename Real>
TensorT<Real>::TensorT(Shape shape, std::vector<Real> values)
    : shape_(shape), values_(std::move(values)) {
  validate_shape(shape_);
  if (values_.size() != shape_.numel()) {
    throw DimensionError("tensor of shape " + shape_.str() + " needs " +
                         std::to_string(shape_.numel()) + " values, got " +
                         std::to_string(values_.size()));
  }
}

template <typename Real>
std::span<Real> TensorT<Real>::sample(int t, int n) {
  return {values_.data() + index(t, n, 0, 0, 0), shape_.sample_size()};
}

template <typename Real>
std::span<const Real> TensorT<Real>::sample(int t, int n) const {
  return {values_.data() + index(t, n, 0, 0, 0), shape_.sample_size()};
}

template <typename Real>
TensorT<Real> TensorT<Real>::slice_time(int t) const {
  if (t < 0 || t >= shape_.t) {
    throw DimensionError("timestep " + std::to_string(t) +
                         " out of range for " + shape_.str());
  }
  Shape s = shape_;
  s.t = 1;
  const std::size_t frame = s.numel();
  auto first = values_.begin() + static_cast<std::ptrdiff_t>(frame * t);
  return TensorT(s, std::vector<Real>(first, first + frame));
}

template <typename Real>
bool TensorT<Real>::is_binary() const {
  return std::all_of(values_.begin(), values_.end(), [](Real v) {
    return v == Real(0) || v == Real(1);
  });
}

template <typename Real>
TensorT<Real> concat_time(std::span<const TensorT<Real>> frames) {
  if (frames.empty()) throw DimensionError("concat_time: no frames");
  Shape s = frames.front().shape();
  std::vector<Real> out;
  out.reserve(s.numel() * frames.size());
  for (const auto& f : frames) {
    Shape fs = f.shape();
    if (fs.t != 1 || fs.n != s.n || fs.c != s.c || fs.h != s.h ||
        fs.w != s.w) {
      throw DimensionError("concat_time: frame shape " + fs.str() +
                           " incompatible with " + s.str());
    }
    out.insert(out.end(), f.values().begin(), f.values().end());
  }
  s.t = static_cast<int>(frames.size());
  return TensorT<Real>(s, std::move(out));
}

template <typename Real>
TensorT<Real> stack_batch(std::span<const TensorT<Real>> samples) {
  if (samples.empty()) throw DimensionError("stack_batch: no samples");
  const Shape first = samples.front().shape();
  for (const auto& s : samples) {
    if (s.shape().n != 1 || s.shape().t != first.t ||
        s.shape().c != first.c || s.shape().h != first.h ||
        s.shape().w != first.w) {
      throw DimensionError("stack_batch: sample shape " + s.shape().str() +
                           " incompatible with " + first.str());
    }
  }
  Shape out_shape = first;
  out_shape.n = static_cast<int>(samples.size());
  TensorT<Real> out(out_shape);
  for (int t = 0; t < first.t; ++t) {
    for (int n = 0; n < out_shape.n; ++n) {
      auto src = samples[static_cast<std::size_t>(n)].sample(t, 0);
      std::copy(src.begin(), src.end(), out.sample(t, n).begin());
    }
  }
  return out;
}

template <typename Real>
MatrixT<Real>::MatrixT(int rows, int cols, std::vector<Real> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows < 0 || cols < 0 ||
      values_.size() != static_cast<std::size_t>(rows) * cols) {
    throw DimensionError("matrix [" + std::to_string(rows) + "," +
                         std::to_string(cols) + "] needs " +
                         std::to_string(rows * cols) + " values, got " +
                         std::to_string(values_.size()));
  }
}

template <typename Real>
std::vector<int> argmax_rows(const MatrixT<Real>& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (int r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    out[static_cast<std::size_t>(r)] = static_cast<int>(
        std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

#define STBP_INSTANTIATE_TENSOR(Real)                                   \
  template class TensorT<Real>;                                         \
  template class MatrixT<Real>;                                         \
  template TensorT<Real> concat_time(std::span<const TensorT<Real>>);   \
  template TensorT<Real> stack_batch(std::span<const TensorT<Real>>);   \
  template std::vector<int> argmax_rows(const MatrixT<Real>&);

STBP_INSTANTIATE_TENSOR(float)
STBP_INSTANTIATE_TENSOR(double)

}  // namespace stbp
