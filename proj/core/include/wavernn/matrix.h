#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wavernn/errors.h"

namespace wavernn {

// Row-major dense matrix. Column vectors (biases) are n x 1 matrices.
template <class T>
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {
    if (rows == 0 || cols == 0) {
      throw InputError("matrix dimensions must be positive, got " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows == 0 || cols == 0) {
      throw InputError("matrix dimensions must be positive");
    }
    if (values_.size() != rows * cols) {
      throw InputError("matrix value count " + std::to_string(values_.size()) +
                       " does not match " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  std::span<T> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  void fill(T value) { std::fill(values_.begin(), values_.end(), value); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Matrix<U> cast() const {
    Matrix<U> out;
    out.rows_ = rows_;
    out.cols_ = cols_;
    out.values_.assign(values_.begin(), values_.end());
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  template <class U>
  friend class Matrix;

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> values_;
};

using DenseMatrix = Matrix<float>;

}  // namespace wavernn
