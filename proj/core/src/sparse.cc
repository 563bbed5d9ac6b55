#include "wavernn/sparse.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <numeric>

#include "wavernn/half.h"

namespace wavernn {
namespace {

void check_tiling(std::size_t n_rows, std::size_t n_cols, BlockShape shape) {
  if (!shape.supported()) {
    throw InputError("unsupported block shape " + shape.to_string());
  }
  if (n_rows == 0 || n_cols == 0 || n_rows % shape.rows != 0 ||
      n_cols % shape.cols != 0) {
    throw InputError("matrix " + std::to_string(n_rows) + "x" +
                     std::to_string(n_cols) + " is not tiled by " +
                     shape.to_string() + " blocks");
  }
}

}  // namespace

std::string BlockShape::to_string() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

BlockShape BlockShape::parse(std::string_view text) {
  const auto x = text.find('x');
  BlockShape shape{0, 0};
  if (x != std::string_view::npos) {
    const auto* begin = text.data();
    auto r1 = std::from_chars(begin, begin + x, shape.rows);
    auto r2 = std::from_chars(begin + x + 1, begin + text.size(), shape.cols);
    if (r1.ec == std::errc{} && r1.ptr == begin + x && r2.ec == std::errc{} &&
        r2.ptr == begin + text.size() && shape.supported()) {
      return shape;
    }
  }
  throw InputError("unknown block shape '" + std::string(text) +
                   "' (expected 1x1, 4x4 or 16x1)");
}

SparsityMask::SparsityMask(std::size_t n_rows, std::size_t n_cols,
                           BlockShape shape, bool retained)
    : n_rows_(n_rows), n_cols_(n_cols), shape_(shape) {
  check_tiling(n_rows, n_cols, shape);
  const std::size_t bits = block_count();
  packed_.assign((bits + 7) / 8, retained ? 0xffu : 0x00u);
  if (retained && bits % 8 != 0) {
    packed_.back() = static_cast<std::uint8_t>((1u << (bits % 8)) - 1u);
  }
}

SparsityMask SparsityMask::from_packed(std::size_t n_rows, std::size_t n_cols,
                                       BlockShape shape,
                                       std::vector<std::uint8_t> packed) {
  SparsityMask mask(n_rows, n_cols, shape, false);
  if (packed.size() != mask.packed_.size()) {
    throw InputError("packed mask has " + std::to_string(packed.size()) +
                     " bytes, expected " + std::to_string(mask.packed_.size()));
  }
  const std::size_t tail = mask.block_count() % 8;
  if (tail != 0 && (packed.back() >> tail) != 0) {
    throw InputError("packed mask has bits set past the last block");
  }
  mask.packed_ = std::move(packed);
  return mask;
}

SparsityMask SparsityMask::stack_rows(std::span<const SparsityMask> parts) {
  if (parts.empty()) throw InputError("stack_rows: no masks given");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.n_cols() != parts[0].n_cols() ||
        p.block_shape() != parts[0].block_shape()) {
      throw InputError("stack_rows: masks differ in width or block shape");
    }
    rows += p.n_rows();
  }
  SparsityMask out(rows, parts[0].n_cols(), parts[0].block_shape(), false);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t k = 0; k < p.block_count(); ++k) {
      if (p.bit(k)) out.set_bit(offset + k, true);
    }
    offset += p.block_count();
  }
  return out;
}

void SparsityMask::set_bit(std::size_t index, bool retained) {
  const auto bit = static_cast<std::uint8_t>(1u << (index & 7u));
  if (retained) {
    packed_[index >> 3] |= bit;
  } else {
    packed_[index >> 3] &= static_cast<std::uint8_t>(~bit);
  }
}

std::size_t SparsityMask::retained_blocks() const {
  std::size_t count = 0;
  for (std::uint8_t byte : packed_) count += std::popcount(byte);
  return count;
}

double SparsityMask::sparsity() const {
  return 1.0 - static_cast<double>(retained_blocks()) /
                   static_cast<double>(block_count());
}

std::size_t mask_overhead_bits(const SparsityMask& mask) {
  return mask.block_count();
}

BlockSparseMatrix::BlockSparseMatrix(std::size_t n_rows, std::size_t n_cols,
                                     BlockShape shape,
                                     std::vector<std::uint32_t> block_row_start,
                                     std::vector<std::uint32_t> block_col,
                                     std::vector<std::uint16_t> values)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      shape_(shape),
      block_row_start_(std::move(block_row_start)),
      block_col_(std::move(block_col)),
      values_(std::move(values)) {
  check_tiling(n_rows, n_cols, shape);
  const std::size_t brows = n_rows / shape.rows;
  const std::size_t bcols = n_cols / shape.cols;
  if (block_row_start_.size() != brows + 1 || block_row_start_.front() != 0 ||
      block_row_start_.back() != block_col_.size()) {
    throw InputError("block-sparse row index is inconsistent");
  }
  if (values_.size() != block_col_.size() * shape.size()) {
    throw InputError("block-sparse value count does not match retained blocks");
  }
  for (std::size_t br = 0; br < brows; ++br) {
    const auto first = block_row_start_[br];
    const auto last = block_row_start_[br + 1];
    if (first > last) throw InputError("block-sparse row index decreases");
    for (auto k = first; k < last; ++k) {
      if (block_col_[k] >= bcols || (k > first && block_col_[k] <= block_col_[k - 1])) {
        throw InputError("block columns must be in range and strictly increasing");
      }
    }
  }
}

SparsityMask BlockSparseMatrix::mask() const {
  SparsityMask mask(n_rows_, n_cols_, shape_, false);
  for (std::size_t br = 0; br < block_rows(); ++br) {
    for (auto k = block_row_start_[br]; k < block_row_start_[br + 1]; ++k) {
      mask.set_block(br, block_col_[k], true);
    }
  }
  return mask;
}

BlockSparseMatrix compress(const DenseMatrix& dense, const SparsityMask& mask) {
  if (dense.rows() != mask.n_rows() || dense.cols() != mask.n_cols()) {
    throw InputError("compress: mask is " + std::to_string(mask.n_rows()) + "x" +
                     std::to_string(mask.n_cols()) + ", matrix is " +
                     std::to_string(dense.rows()) + "x" +
                     std::to_string(dense.cols()));
  }
  const BlockShape shape = mask.block_shape();
  std::vector<std::uint32_t> starts{0};
  std::vector<std::uint32_t> cols;
  std::vector<std::uint16_t> values;
  cols.reserve(mask.retained_blocks());
  values.reserve(mask.retained_weights());
  for (std::size_t br = 0; br < mask.block_rows(); ++br) {
    for (std::size_t bc = 0; bc < mask.block_cols(); ++bc) {
      if (!mask.block(br, bc)) continue;
      cols.push_back(static_cast<std::uint32_t>(bc));
      for (std::uint32_t cc = 0; cc < shape.cols; ++cc) {
        for (std::uint32_t r = 0; r < shape.rows; ++r) {
          values.push_back(float_to_half(
              dense(br * shape.rows + r, bc * shape.cols + cc)));
        }
      }
    }
    starts.push_back(static_cast<std::uint32_t>(cols.size()));
  }
  return BlockSparseMatrix(dense.rows(), dense.cols(), shape, std::move(starts),
                           std::move(cols), std::move(values));
}

DenseMatrix decompress(const BlockSparseMatrix& sparse) {
  DenseMatrix dense(sparse.n_rows(), sparse.n_cols());
  const BlockShape shape = sparse.block_shape();
  const auto starts = sparse.block_row_start();
  const auto cols = sparse.block_col();
  const auto values = sparse.values();
  for (std::size_t br = 0; br < sparse.block_rows(); ++br) {
    for (auto k = starts[br]; k < starts[br + 1]; ++k) {
      const std::uint16_t* w = values.data() + std::size_t{k} * shape.size();
      for (std::uint32_t cc = 0; cc < shape.cols; ++cc) {
        for (std::uint32_t r = 0; r < shape.rows; ++r) {
          dense(br * shape.rows + r, std::size_t{cols[k]} * shape.cols + cc) =
              half_to_float(w[cc * shape.rows + r]);
        }
      }
    }
  }
  return dense;
}

}  // namespace wavernn
