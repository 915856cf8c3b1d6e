#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace vadd::diff {

/// Dense row-major array of doubles.
///
/// Rank-1 tensors of extent n behave as n rows of one column; rank-2 as
/// rows x cols. Higher ranks are only reshaped, never computed on.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);
  static Tensor scalar(double value);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const noexcept;

  std::span<double> data() noexcept { return values_; }
  std::span<const double> data() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;
  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  void fill(double v);
  Tensor reshaped(std::vector<std::size_t> shape) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::size_t shape_size(const std::vector<std::size_t>& shape) noexcept;

}  // namespace vadd::diff
