#include "vadd/diff/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "vadd/error.hpp"

namespace vadd::diff {

std::size_t shape_size(const std::vector<std::size_t>& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size()) {
    throw ConfigError("tensor: shape holds " + std::to_string(shape_size(shape_)) +
                      " elements but " + std::to_string(values_.size()) + " values given");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

std::size_t Tensor::cols() const noexcept {
  if (shape_.size() <= 1) return 1;
  std::size_t c = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
  return c;
}

double Tensor::item() const {
  if (values_.size() != 1) throw UsageError("tensor: item() on a non-scalar tensor");
  return values_[0];
}

bool Tensor::all_finite() const noexcept {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (shape_size(shape) != values_.size()) throw ConfigError("tensor: reshape changes element count");
  return Tensor(std::move(shape), values_);
}

}  // namespace vadd::diff
