#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgcap::ad {

/// Raised when operands do not conform to a primitive's shape contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Vectors are 1 x n rows, scalars 1 x 1.
/// A zero extent is allowed so that empty feature matrices (0 x k) are
/// representable; no primitive accepts them except concat/reshape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor row(std::vector<double> values);
  static Tensor scalar(double value) { return Tensor(1, 1, value); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }
  std::span<const double> row_span(std::size_t r) const {
    return data().subspan(r * cols_, cols_);
  }
  const std::vector<double>& values() const { return values_; }

  /// Same storage, new extents; product must be unchanged.
  Tensor reshaped(std::size_t rows, std::size_t cols) const;

  std::string shape_string() const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Largest |a_i - b_i|; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace sgcap::ad
