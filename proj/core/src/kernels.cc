#include "wavernn/kernels.h"

#include <string>

#include "wavernn/half.h"

#if defined(__AVX2__) && defined(__F16C__)
#include <immintrin.h>
#define WAVERNN_SIMD_KERNELS 1
#endif

namespace wavernn {
namespace {

void check_dims(std::size_t rows, std::size_t cols, std::size_t x_size,
                std::size_t y_size) {
  if (x_size != cols) {
    throw InputError("matvec: input length " + std::to_string(x_size) +
                     " does not match " + std::to_string(cols) + " columns");
  }
  if (y_size != rows) {
    throw InputError("matvec: output length " + std::to_string(y_size) +
                     " does not match " + std::to_string(rows) + " rows");
  }
}

inline float dot_row(const float* w, const float* x, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  float acc[kLanes] = {};
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    for (std::size_t k = 0; k < kLanes; ++k) acc[k] += w[j + k] * x[j + k];
  }
  float tail = 0.0f;
  for (; j < n; ++j) tail += w[j] * x[j];
  for (std::size_t width = kLanes / 2; width >= 1; width /= 2) {
    for (std::size_t k = 0; k < width; ++k) acc[k] += acc[k + width];
  }
  return acc[0] + tail;
}

// Accumulates one block-row of an R x C block-sparse matrix into acc[0..R).
// Blocks are stored column-major, so column cc of a block is R contiguous
// halves.
template <std::uint32_t R, std::uint32_t C>
inline void block_row_product(const std::uint16_t* values,
                              const std::uint32_t* cols, std::size_t count,
                              const float* x, float* acc) {
#if defined(WAVERNN_SIMD_KERNELS)
  if constexpr (R == 16 && C == 1) {
    __m256 lo = _mm256_setzero_ps();
    __m256 hi = _mm256_setzero_ps();
    for (std::size_t b = 0; b < count; ++b) {
      const __m256 xv = _mm256_set1_ps(x[cols[b]]);
      const std::uint16_t* w = values + b * 16;
      const __m256 w_lo = _mm256_cvtph_ps(
          _mm_loadu_si128(reinterpret_cast<const __m128i*>(w)));
      const __m256 w_hi = _mm256_cvtph_ps(
          _mm_loadu_si128(reinterpret_cast<const __m128i*>(w + 8)));
      lo = _mm256_add_ps(lo, _mm256_mul_ps(w_lo, xv));
      hi = _mm256_add_ps(hi, _mm256_mul_ps(w_hi, xv));
    }
    _mm256_storeu_ps(acc, lo);
    _mm256_storeu_ps(acc + 8, hi);
    return;
  } else if constexpr (R == 4 && C == 4) {
    __m128 sum = _mm_setzero_ps();
    for (std::size_t b = 0; b < count; ++b) {
      const float* xb = x + std::size_t{cols[b]} * 4;
      const std::uint16_t* w = values + b * 16;
      const __m256 w01 = _mm256_cvtph_ps(
          _mm_loadu_si128(reinterpret_cast<const __m128i*>(w)));
      const __m256 w23 = _mm256_cvtph_ps(
          _mm_loadu_si128(reinterpret_cast<const __m128i*>(w + 8)));
      sum = _mm_add_ps(sum, _mm_mul_ps(_mm256_castps256_ps128(w01),
                                       _mm_set1_ps(xb[0])));
      sum = _mm_add_ps(sum, _mm_mul_ps(_mm256_extractf128_ps(w01, 1),
                                       _mm_set1_ps(xb[1])));
      sum = _mm_add_ps(sum, _mm_mul_ps(_mm256_castps256_ps128(w23),
                                       _mm_set1_ps(xb[2])));
      sum = _mm_add_ps(sum, _mm_mul_ps(_mm256_extractf128_ps(w23, 1),
                                       _mm_set1_ps(xb[3])));
    }
    _mm_storeu_ps(acc, sum);
    return;
  } else if constexpr (R == 1 && C == 1) {
    float sum = 0.0f;
    std::size_t b = 0;
    alignas(32) float w[8];
    for (; b + 8 <= count; b += 8) {
      _mm256_store_ps(w, _mm256_cvtph_ps(_mm_loadu_si128(
                             reinterpret_cast<const __m128i*>(values + b))));
      for (std::size_t k = 0; k < 8; ++k) sum += w[k] * x[cols[b + k]];
    }
    for (; b < count; ++b) sum += half_to_float(values[b]) * x[cols[b]];
    acc[0] = sum;
    return;
  }
#endif
  for (std::uint32_t r = 0; r < R; ++r) acc[r] = 0.0f;
  for (std::size_t b = 0; b < count; ++b) {
    const float* xb = x + std::size_t{cols[b]} * C;
    const std::uint16_t* w = values + b * R * C;
    for (std::uint32_t cc = 0; cc < C; ++cc) {
      const float xv = xb[cc];
      for (std::uint32_t r = 0; r < R; ++r) {
        acc[r] += half_to_float(w[cc * R + r]) * xv;
      }
    }
  }
}

template <std::uint32_t R, std::uint32_t C>
void block_sparse_rows(const BlockSparseMatrix& s, const float* x, float* y,
                       std::size_t begin, std::size_t end) {
  const auto starts = s.block_row_start();
  const std::uint32_t* cols = s.block_col().data();
  const std::uint16_t* values = s.values().data();
  alignas(32) float acc[R];
  for (std::size_t br = begin; br < end; ++br) {
    const std::size_t first = starts[br];
    block_row_product<R, C>(values + first * R * C, cols + first,
                            starts[br + 1] - first, x, acc);
    for (std::uint32_t r = 0; r < R; ++r) y[br * R + r] = acc[r];
  }
}

void dispatch_block_sparse(const BlockSparseMatrix& s, const float* x,
                           float* y, std::size_t begin, std::size_t end) {
  const BlockShape shape = s.block_shape();
  if (shape == kBlock16x1) {
    block_sparse_rows<16, 1>(s, x, y, begin, end);
  } else if (shape == kBlock4x4) {
    block_sparse_rows<4, 4>(s, x, y, begin, end);
  } else {
    block_sparse_rows<1, 1>(s, x, y, begin, end);
  }
}

}  // namespace

void matvec_dense(const DenseMatrix& m, std::span<const float> x,
                  std::span<float> y) {
  check_dims(m.rows(), m.cols(), x.size(), y.size());
  matvec_dense_rows(m, x, y, 0, m.rows());
}

std::vector<float> matvec_dense(const DenseMatrix& m, std::span<const float> x) {
  std::vector<float> y(m.rows());
  matvec_dense(m, x, y);
  return y;
}

void matvec_dense_rows(const DenseMatrix& m, std::span<const float> x,
                       std::span<float> y, std::size_t row_begin,
                       std::size_t row_end) {
  check_dims(m.rows(), m.cols(), x.size(), y.size());
  const std::size_t n = m.cols();
  for (std::size_t r = row_begin; r < row_end; ++r) {
    y[r] = dot_row(m.data() + r * n, x.data(), n);
  }
}

void matvec_block_sparse(const BlockSparseMatrix& s, std::span<const float> x,
                         std::span<float> y) {
  matvec_block_sparse_rows(s, x, y, 0, s.block_rows());
}

std::vector<float> matvec_block_sparse(const BlockSparseMatrix& s,
                                       std::span<const float> x) {
  std::vector<float> y(s.n_rows());
  matvec_block_sparse(s, x, y);
  return y;
}

void matvec_block_sparse_rows(const BlockSparseMatrix& s,
                              std::span<const float> x, std::span<float> y,
                              std::size_t block_row_begin,
                              std::size_t block_row_end) {
  check_dims(s.n_rows(), s.n_cols(), x.size(), y.size());
  dispatch_block_sparse(s, x.data(), y.data(), block_row_begin, block_row_end);
}

std::size_t WeightMatrix::rows() const {
  return is_sparse() ? sparse().n_rows() : dense().rows();
}

std::size_t WeightMatrix::cols() const {
  return is_sparse() ? sparse().n_cols() : dense().cols();
}

DenseMatrix WeightMatrix::to_dense() const {
  return is_sparse() ? decompress(sparse()) : dense();
}

std::size_t WeightMatrix::stored_weights() const {
  return is_sparse() ? sparse().nnz() : dense().size();
}

std::size_t WeightMatrix::stored_bytes() const {
  return is_sparse() ? sparse().nnz() * sizeof(std::uint16_t)
                     : dense().size() * sizeof(float);
}

void WeightMatrix::multiply(std::span<const float> x, std::span<float> y) const {
  if (is_sparse()) {
    matvec_block_sparse(sparse(), x, y);
  } else {
    matvec_dense(dense(), x, y);
  }
}

void WeightMatrix::multiply_batch(std::span<const std::span<const float>> xs,
                                  std::span<const std::span<float>> ys) const {
  if (xs.size() != ys.size()) {
    throw InputError("multiply_batch: input and output counts differ");
  }
  for (std::size_t b = 0; b < xs.size(); ++b) {
    check_dims(rows(), cols(), xs[b].size(), ys[b].size());
  }
  if (is_sparse()) {
    const BlockSparseMatrix& s = sparse();
    for (std::size_t br = 0; br < s.block_rows(); ++br) {
      for (std::size_t b = 0; b < xs.size(); ++b) {
        dispatch_block_sparse(s, xs[b].data(), ys[b].data(), br, br + 1);
      }
    }
  } else {
    const DenseMatrix& m = dense();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const float* w = m.data() + r * m.cols();
      for (std::size_t b = 0; b < xs.size(); ++b) {
        ys[b][r] = dot_row(w, xs[b].data(), m.cols());
      }
    }
  }
}

}  // namespace wavernn
