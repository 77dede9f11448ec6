#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fslab {

/// Raised when a tensor shape or argument violates an operation's contract.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when an input's spatial extent cannot satisfy an op's stride contract.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Channel-major extent of a dense feature map.
struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense C x H x W array of doubles, row-major within each channel plane.
///
/// Convolution weights reuse the same container with the shape
/// {out_channels, in_channels, kernel * kernel}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(int c, int h, int w, double fill = 0.0) : Tensor(Shape{c, h, w}, fill) {}
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.c; }
  int height() const { return shape_.h; }
  int width() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }
  const double* channel(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * shape_.plane();
  }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  double sum() const;
  double mean() const;
  double min() const;
  double max() const;
  bool all_finite() const;

  /// Largest elementwise |a - b|; shapes must match.
  static double max_abs_diff(const Tensor& a, const Tensor& b);

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_;
  std::vector<double> data_;
};

void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace fslab
