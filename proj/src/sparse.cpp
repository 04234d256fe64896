#include "gtca/sparse.hpp"

#include <algorithm>

#include "gtca/errors.hpp"

namespace gtca {

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  auto first = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[r]);
  auto last = col_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[r + 1]);
  auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return 0.0;
  return entries[static_cast<std::size_t>(it - col_indices.begin())];
}

Tensor SparseMatrix::to_dense() const {
  Tensor d(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t p = row_offsets[r]; p < row_offsets[r + 1]; ++p) d(r, col_indices[p]) = entries[p];
  return d;
}

Tensor SparseMatrix::multiply(const Tensor& dense) const {
  if (dense.rows() != cols) throw ShapeError("spmm: inner dimension mismatch");
  Tensor out(rows, dense.cols());
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = out.row(r);
    for (std::size_t p = row_offsets[r]; p < row_offsets[r + 1]; ++p) {
      const double w = entries[p];
      auto src = dense.row(col_indices[p]);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

Tensor SparseMatrix::multiply_transposed(const Tensor& dense) const {
  if (dense.rows() != rows) throw ShapeError("spmm^T: inner dimension mismatch");
  Tensor out(cols, dense.cols());
  for (std::size_t r = 0; r < rows; ++r) {
    auto src = dense.row(r);
    for (std::size_t p = row_offsets[r]; p < row_offsets[r + 1]; ++p) {
      const double w = entries[p];
      auto dst = out.row(col_indices[p]);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

}  // namespace gtca
