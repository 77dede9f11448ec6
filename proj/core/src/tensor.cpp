#include "fslab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fslab {

std::string Shape::str() const {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  if (shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ContractError("negative tensor extent " + shape.str());
  }
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.numel()) {
    throw ContractError("tensor of shape " + shape.str() + " given " +
                        std::to_string(data_.size()) + " values");
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

double Tensor::min() const { return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end()); }

double Tensor::max() const { return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end()); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ContractError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

}  // namespace fslab
