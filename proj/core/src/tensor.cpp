#include "sgcap/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace sgcap::ad {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("tensor of shape " + shape_string() + " given " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::reshaped(std::size_t rows, std::size_t cols) const {
  if (rows * cols != size()) {
    throw ShapeError("cannot reshape " + shape_string() + " to (" +
                     std::to_string(rows) + ", " + std::to_string(cols) + ")");
  }
  return Tensor(rows, cols, values_);
}

std::string Tensor::shape_string() const {
  return "(" + std::to_string(rows_) + ", " + std::to_string(cols_) + ")";
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

}  // namespace sgcap::ad
