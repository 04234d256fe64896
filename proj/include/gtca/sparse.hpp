#pragma once

#include <cstddef>
#include <vector>

#include "gtca/tensor.hpp"

namespace gtca {

// Compressed sparse row matrix. Column indices are sorted within each row.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_offsets;  // rows + 1 entries
  std::vector<std::size_t> col_indices;
  std::vector<double> entries;

  std::size_t nnz() const noexcept { return entries.size(); }
  double at(std::size_t r, std::size_t c) const;
  Tensor to_dense() const;

  // this * dense
  Tensor multiply(const Tensor& dense) const;
  // this^T * dense
  Tensor multiply_transposed(const Tensor& dense) const;
};

}  // namespace gtca
