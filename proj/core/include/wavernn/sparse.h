#pragma once

// Block-sparse weight storage. A matrix is tiled into non-overlapping
// rows x cols blocks; a packed bit per block says whether it is retained.
// Retained blocks are kept in 16-bit floating point, grouped by block-row.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wavernn/matrix.h"

namespace wavernn {

struct BlockShape {
  std::uint32_t rows = 1;
  std::uint32_t cols = 1;

  constexpr std::size_t size() const noexcept {
    return std::size_t{rows} * cols;
  }
  // One of the shapes the kernels are specialized for: 1x1, 4x4, 16x1.
  constexpr bool supported() const noexcept {
    return (rows == 1 && cols == 1) || (rows == 4 && cols == 4) ||
           (rows == 16 && cols == 1);
  }
  std::string to_string() const;
  // Parses "4x4" / "16x1" / "1x1". Throws InputError on anything else.
  static BlockShape parse(std::string_view text);

  friend constexpr bool operator==(BlockShape, BlockShape) = default;
};

inline constexpr BlockShape kBlock1x1{1, 1};
inline constexpr BlockShape kBlock4x4{4, 4};
inline constexpr BlockShape kBlock16x1{16, 1};

class SparsityMask {
 public:
  SparsityMask() = default;
  // Throws InputError unless the shape is supported and tiles the matrix.
  SparsityMask(std::size_t n_rows, std::size_t n_cols, BlockShape shape,
               bool retained = true);

  // Bits are block-row-major, bit k stored at byte k / 8, position k % 8.
  static SparsityMask from_packed(std::size_t n_rows, std::size_t n_cols,
                                  BlockShape shape,
                                  std::vector<std::uint8_t> packed);

  // Concatenates masks of equal width and block shape along the row axis.
  static SparsityMask stack_rows(std::span<const SparsityMask> parts);

  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t n_cols() const noexcept { return n_cols_; }
  BlockShape block_shape() const noexcept { return shape_; }
  std::size_t block_rows() const noexcept { return n_rows_ / shape_.rows; }
  std::size_t block_cols() const noexcept { return n_cols_ / shape_.cols; }
  std::size_t block_count() const noexcept { return block_rows() * block_cols(); }
  std::size_t weight_count() const noexcept { return n_rows_ * n_cols_; }

  bool block(std::size_t block_row, std::size_t block_col) const {
    return bit(block_row * block_cols() + block_col);
  }
  void set_block(std::size_t block_row, std::size_t block_col, bool retained) {
    set_bit(block_row * block_cols() + block_col, retained);
  }
  bool bit(std::size_t index) const {
    return (packed_[index >> 3] >> (index & 7u)) & 1u;
  }
  void set_bit(std::size_t index, bool retained);

  // Whether weight (r, c) lies in a retained block.
  bool retains(std::size_t r, std::size_t c) const {
    return block(r / shape_.rows, c / shape_.cols);
  }

  std::size_t retained_blocks() const;
  std::size_t retained_weights() const { return retained_blocks() * shape_.size(); }
  // Fraction of weights pruned.
  double sparsity() const;

  std::span<const std::uint8_t> packed() const noexcept { return packed_; }

  // Zeroes every weight of `m` outside the retained blocks.
  template <class T>
  void apply(Matrix<T>& m) const {
    for (std::size_t r = 0; r < n_rows_; ++r) {
      for (std::size_t c = 0; c < n_cols_; ++c) {
        if (!retains(r, c)) m(r, c) = T{0};
      }
    }
  }

  friend bool operator==(const SparsityMask&, const SparsityMask&) = default;

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  BlockShape shape_{};
  std::vector<std::uint8_t> packed_;
};

// Storage cost of the packed mask in bits: one per block.
std::size_t mask_overhead_bits(const SparsityMask& mask);

class BlockSparseMatrix {
 public:
  BlockSparseMatrix() = default;

  // Validating constructor for deserialized parts. `block_row_start` has
  // block_rows + 1 entries; `block_col` lists retained block columns
  // (strictly increasing within a block-row); `values` holds m half values
  // per retained block, each block stored column-major.
  BlockSparseMatrix(std::size_t n_rows, std::size_t n_cols, BlockShape shape,
                    std::vector<std::uint32_t> block_row_start,
                    std::vector<std::uint32_t> block_col,
                    std::vector<std::uint16_t> values);

  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t n_cols() const noexcept { return n_cols_; }
  BlockShape block_shape() const noexcept { return shape_; }
  std::size_t block_rows() const noexcept { return n_rows_ / shape_.rows; }
  std::size_t retained_blocks() const noexcept { return block_col_.size(); }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::uint32_t> block_row_start() const noexcept {
    return block_row_start_;
  }
  std::span<const std::uint32_t> block_col() const noexcept { return block_col_; }
  std::span<const std::uint16_t> values() const noexcept { return values_; }

  SparsityMask mask() const;

  friend bool operator==(const BlockSparseMatrix&,
                         const BlockSparseMatrix&) = default;

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  BlockShape shape_{};
  std::vector<std::uint32_t> block_row_start_;
  std::vector<std::uint32_t> block_col_;
  std::vector<std::uint16_t> values_;
};

// Keeps the mask's retained blocks of `dense`, rounded to 16-bit storage.
BlockSparseMatrix compress(const DenseMatrix& dense, const SparsityMask& mask);

// Pruned positions come back as exactly 0.0f.
DenseMatrix decompress(const BlockSparseMatrix& sparse);

}  // namespace wavernn
