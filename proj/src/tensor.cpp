#include "lamar/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "lamar/error.hpp"

namespace lamar {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::kShapeMismatch,
                "tensor: data length " + std::to_string(data_.size()) +
                    " does not match shape " + lamar::shape_string(rows, cols));
  }
}

Tensor Tensor::row(std::span<const Real> values) {
  return Tensor(1, values.size(), std::vector<Real>(values.begin(), values.end()));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<Real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw Error(ErrorCode::kShapeMismatch, "tensor: ragged initializer rows");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

Tensor Tensor::reshaped(std::size_t rows, std::size_t cols) const {
  if (rows * cols != size()) {
    throw Error(ErrorCode::kShapeMismatch, "reshape: cannot view " + shape_string() +
                                               " as " + lamar::shape_string(rows, cols));
  }
  return Tensor(rows, cols, data_);
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const { return lamar::shape_string(rows_, cols_); }

std::string shape_string(std::size_t rows, std::size_t cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

}  // namespace lamar
