#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace stbp {

// Extent of a spatio-temporal tensor, row-major in [T, N, C, H, W] order.
struct Shape {
  int t = 1;
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(t) * n * c * h * w;
  }
  // Elements in one (t, n) sample.
  std::size_t sample_size() const {
    return static_cast<std::size_t>(c) * h * w;
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
  std::string str() const;

  friend auto operator<=>(const Shape&, const Shape&) = default;
};

// Throws DimensionError unless every extent is >= 1.
void validate_shape(const Shape& shape);

// Dense rank-5 array carrying spikes or pre-activations across timesteps.
template <typename Real>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(Shape shape, Real fill = Real(0));
  TensorT(Shape shape, std::vector<Real> values);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }
  std::vector<Real>& storage() { return values_; }
  const std::vector<Real>& storage() const { return values_; }

  std::size_t index(int t, int n, int c, int h, int w) const {
    return (((static_cast<std::size_t>(t) * shape_.n + n) * shape_.c + c) *
                shape_.h +
            h) *
               shape_.w +
           w;
  }
  Real& at(int t, int n, int c, int h, int w) {
    return values_[index(t, n, c, h, w)];
  }
  Real at(int t, int n, int c, int h, int w) const {
    return values_[index(t, n, c, h, w)];
  }

  // Contiguous C*H*W block for one (t, n) pair.
  std::span<Real> sample(int t, int n);
  std::span<const Real> sample(int t, int n) const;

  // Copy of timestep t as a T=1 tensor.
  TensorT slice_time(int t) const;

  // True when every element is exactly 0 or 1.
  bool is_binary() const;

  friend bool operator==(const TensorT&, const TensorT&) = default;

 private:
  Shape shape_{};
  std::vector<Real> values_;
};

using Tensor = TensorT<float>;

// Stacks T=1 tensors along the time axis.
template <typename Real>
TensorT<Real> concat_time(std::span<const TensorT<Real>> frames);

// Stacks sample tensors ([T,1,C,H,W] each) along the batch axis.
template <typename Real>
TensorT<Real> stack_batch(std::span<const TensorT<Real>> samples);

template <typename To, typename From>
TensorT<To> tensor_cast(const TensorT<From>& in) {
  std::vector<To> out(in.values().begin(), in.values().end());
  return TensorT<To>(in.shape(), std::move(out));
}

// Row-major [rows, cols] matrix; used for logits and one-hot labels.
template <typename Real>
class MatrixT {
 public:
  MatrixT() = default;
  MatrixT(int rows, int cols, Real fill = Real(0))
      : rows_(rows), cols_(cols),
        values_(static_cast<std::size_t>(rows) * cols, fill) {}
  MatrixT(int rows, int cols, std::vector<Real> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  Real& operator()(int r, int c) {
    return values_[static_cast<std::size_t>(r) * cols_ + c];
  }
  Real operator()(int r, int c) const {
    return values_[static_cast<std::size_t>(r) * cols_ + c];
  }
  std::span<Real> row(int r) {
    return {values_.data() + static_cast<std::size_t>(r) * cols_,
            static_cast<std::size_t>(cols_)};
  }
  std::span<const Real> row(int r) const {
    return {values_.data() + static_cast<std::size_t>(r) * cols_,
            static_cast<std::size_t>(cols_)};
  }
  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }

  friend bool operator==(const MatrixT&, const MatrixT&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Real> values_;
};

using Matrix = MatrixT<float>;

// Index of the largest entry in each row (first one wins on ties).
template <typename Real>
std::vector<int> argmax_rows(const MatrixT<Real>& m);

}  // namespace stbp
