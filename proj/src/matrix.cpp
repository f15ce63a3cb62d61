#include "repdisp/matrix.hpp"

#include <cmath>
#include <string>

namespace repdisp {

EmbeddingMatrix::EmbeddingMatrix(std::size_t n_rows, std::size_t dim,
                                 std::vector<float> data)
    : n_rows_(n_rows), dim_(dim), data_(std::move(data)) {
  if (n_rows_ == 0 || dim_ == 0) {
    fail(Errc::bad_shape, "embedding matrix needs at least one row and one column");
  }
  if (data_.size() != n_rows_ * dim_) {
    fail(Errc::bad_shape, "embedding payload has " + std::to_string(data_.size()) +
                              " elements, expected " + std::to_string(n_rows_ * dim_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      fail(Errc::non_finite, "non-finite element at row " + std::to_string(i / dim_) +
                                 ", column " + std::to_string(i % dim_));
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::from_rows(
    std::initializer_list<std::initializer_list<float>> rows) {
  auto m = Matrix<float>::from_rows(rows);
  return EmbeddingMatrix(m.rows(), m.cols(), {m.data().begin(), m.data().end()});
}

EmbeddingMatrix EmbeddingMatrix::from_matrix(const Matrix64& m) {
  std::vector<float> data(m.data().size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(m.data()[i]);
  return EmbeddingMatrix(m.rows(), m.cols(), std::move(data));
}

EmbeddingMatrix EmbeddingMatrix::gather(std::span<const std::size_t> rows) const {
  std::vector<float> out;
  out.reserve(rows.size() * dim_);
  for (std::size_t r : rows) {
    if (r >= n_rows_) {
      fail(Errc::out_of_bounds, "row index " + std::to_string(r) + " out of range");
    }
    auto src = row(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  return EmbeddingMatrix(rows.size(), dim_, std::move(out));
}

Matrix64 EmbeddingMatrix::to_f64() const {
  return Matrix64(n_rows_, dim_, std::vector<double>(data_.begin(), data_.end()));
}

}  // namespace repdisp
