#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lamar {

using Real = double;

// Dense row-major matrix. A vector is a 1 x n tensor.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Real fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<Real> data);

  static Tensor row(std::span<const Real> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }
  std::span<Real> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row_span(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  bool same_shape(const Tensor& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  // Same buffer reinterpreted; rows * cols must be preserved.
  Tensor reshaped(std::size_t rows, std::size_t cols) const;
  void fill(Real value);
  bool all_finite() const noexcept;

  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

std::string shape_string(std::size_t rows, std::size_t cols);

}  // namespace lamar
