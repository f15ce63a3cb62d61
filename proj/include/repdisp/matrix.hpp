#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "repdisp/error.hpp"

namespace repdisp {

/// Dense row-major matrix. Used for f64 intermediates (normalized rows,
/// centroids, gradients); f32 model dumps live in EmbeddingMatrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, T{}) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      fail(Errc::bad_shape, "matrix payload size does not match shape");
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  std::span<const T> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<T> row(std::size_t i) noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  T operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }
  T& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * cols_ + j];
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
Matrix<T> Matrix<T>::from_rows(
    std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t n = rows.size();
  const std::size_t d = n == 0 ? 0 : rows.begin()->size();
  std::vector<T> data;
  data.reserve(n * d);
  for (const auto& r : rows) {
    if (r.size() != d) fail(Errc::bad_shape, "ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(n, d, std::move(data));
}

using Matrix64 = Matrix<double>;

/// N x d matrix of f32 context vectors or output-embedding rows.
///
/// Construction validates n_rows >= 1, dim >= 1 and that every element is
/// finite, so downstream kernels never see NaN/Inf.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix(std::size_t n_rows, std::size_t dim, std::vector<float> data);

  static EmbeddingMatrix from_rows(
      std::initializer_list<std::initializer_list<float>> rows);
  static EmbeddingMatrix from_matrix(const Matrix64& m);

  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t i) const noexcept {
    return {data_.data() + i * dim_, dim_};
  }

  EmbeddingMatrix gather(std::span<const std::size_t> rows) const;
  Matrix64 to_f64() const;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t n_rows_;
  std::size_t dim_;
  std::vector<float> data_;
};

/// Non-owning view over all rows of a matrix or an indexed subset of them.
/// The referenced matrix and index list must outlive the view.
template <typename T>
class RowSet {
 public:
  RowSet(std::span<const T> data, std::size_t n_rows, std::size_t dim)
      : data_(data), n_rows_(n_rows), dim_(dim), size_(n_rows) {}

  RowSet(const Matrix<T>& m)  // NOLINT(google-explicit-constructor)
      : RowSet(m.data(), m.rows(), m.cols()) {}

  RowSet(const EmbeddingMatrix& m)  // NOLINT(google-explicit-constructor)
    requires std::is_same_v<T, float>
      : RowSet(m.data(), m.n_rows(), m.dim()) {}

  /// Restricts the view to `indices` (validated against the parent row count).
  RowSet subset(std::span<const std::size_t> indices) const;

  std::size_t size() const noexcept { return size_; }
  std::size_t dim() const noexcept { return dim_; }

  std::size_t source_index(std::size_t k) const noexcept {
    return indices_ ? (*indices_)[k] : k;
  }

  std::span<const T> operator[](std::size_t k) const noexcept {
    return {data_.data() + source_index(k) * dim_, dim_};
  }

 private:
  std::span<const T> data_;
  std::size_t n_rows_;
  std::size_t dim_;
  std::size_t size_;
  std::optional<std::span<const std::size_t>> indices_;
};

template <typename T>
RowSet<T> RowSet<T>::subset(std::span<const std::size_t> indices) const {
  if (indices_) fail(Errc::invalid_argument, "nested row subsets are not supported");
  for (std::size_t idx : indices) {
    if (idx >= n_rows_) {
      fail(Errc::out_of_bounds, "row index " + std::to_string(idx) +
                                    " out of range for " +
                                    std::to_string(n_rows_) + " rows");
    }
  }
  RowSet out = *this;
  out.indices_ = indices;
  out.size_ = indices.size();
  return out;
}

RowSet(const EmbeddingMatrix&) -> RowSet<float>;
RowSet(const Matrix64&) -> RowSet<double>;

}  // namespace repdisp
