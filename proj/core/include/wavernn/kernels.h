#pragma once

// Matrix-vector products. Every kernel accumulates in 32-bit floats in a
// fixed order, so a given product is reproducible across runs, across the
// single and batched entry points, and across thread splits.
//
// Dense rows are reduced with 16 interleaved partial sums that are folded
// pairwise at the end. Block-sparse rows are reduced sequentially: retained
// blocks in increasing column order, then columns within the block.

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "wavernn/matrix.h"
#include "wavernn/sparse.h"

namespace wavernn {

void matvec_dense(const DenseMatrix& m, std::span<const float> x,
                  std::span<float> y);
std::vector<float> matvec_dense(const DenseMatrix& m, std::span<const float> x);

// Rows [row_begin, row_end) only; y is indexed by absolute row.
void matvec_dense_rows(const DenseMatrix& m, std::span<const float> x,
                       std::span<float> y, std::size_t row_begin,
                       std::size_t row_end);

void matvec_block_sparse(const BlockSparseMatrix& s, std::span<const float> x,
                         std::span<float> y);
std::vector<float> matvec_block_sparse(const BlockSparseMatrix& s,
                                       std::span<const float> x);

// Block-rows [block_row_begin, block_row_end) only.
void matvec_block_sparse_rows(const BlockSparseMatrix& s,
                              std::span<const float> x, std::span<float> y,
                              std::size_t block_row_begin,
                              std::size_t block_row_end);

// A weight matrix used at inference time: 32-bit dense or 16-bit block-sparse.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  WeightMatrix(DenseMatrix dense) : storage_(std::move(dense)) {}
  WeightMatrix(BlockSparseMatrix sparse) : storage_(std::move(sparse)) {}

  std::size_t rows() const;
  std::size_t cols() const;
  bool is_sparse() const noexcept {
    return std::holds_alternative<BlockSparseMatrix>(storage_);
  }
  const DenseMatrix& dense() const { return std::get<DenseMatrix>(storage_); }
  const BlockSparseMatrix& sparse() const {
    return std::get<BlockSparseMatrix>(storage_);
  }
  DenseMatrix to_dense() const;
  // Stored weights (retained block weights for sparse storage).
  std::size_t stored_weights() const;
  std::size_t stored_bytes() const;

  void multiply(std::span<const float> x, std::span<float> y) const;

  // One product per right-hand side. The weights are streamed once per
  // row (dense) or block-row (sparse); results are bit-identical to calling
  // multiply() on each input separately.
  void multiply_batch(std::span<const std::span<const float>> xs,
                      std::span<const std::span<float>> ys) const;

 private:
  std::variant<DenseMatrix, BlockSparseMatrix> storage_;
};

}  // namespace wavernn
