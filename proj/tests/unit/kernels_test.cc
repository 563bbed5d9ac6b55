#include <gtest/gtest.h>

#include <cmath>

#include "oracles.h"
#include "wavernn/half.h"
#include "wavernn/kernels.h"
#include "wavernn/matvec_bench.h"
#include "wavernn/rng.h"

namespace wavernn {
namespace {

std::vector<float> random_vector(std::size_t n, Rng& rng) {
  std::vector<float> x(n);
  for (float& v : x) v = rng.uniform(-1.0f, 1.0f);
  return x;
}

// Relative error against the double oracle, scaled by the row's absolute
// mass so that cancellation does not inflate it.
double worst_relative(const std::vector<float>& y, const std::vector<double>& ref,
                      const DenseMatrix& m, std::span<const float> x) {
  double worst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double mass = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      mass += std::fabs(static_cast<double>(m(i, j)) * x[j]);
    }
    if (mass == 0.0) {
      EXPECT_EQ(y[i], 0.0f);
      continue;
    }
    worst = std::max(worst, std::fabs(y[i] - ref[i]) / mass);
  }
  return worst;
}

TEST(MatvecDenseTest, Identity) {
  auto y = matvec_dense(DenseMatrix::identity(2), std::vector<float>{3, 4});
  EXPECT_EQ(y, (std::vector<float>{3, 4}));
}

TEST(MatvecDenseTest, ZeroMatrix) {
  auto y = matvec_dense(DenseMatrix(3, 2), std::vector<float>{5, -7});
  EXPECT_EQ(y, (std::vector<float>{0, 0, 0}));
}

TEST(MatvecDenseTest, MatchesScalarOracle) {
  Rng rng(1);
  for (std::size_t n : {8u, 17u, 64u, 200u}) {
    DenseMatrix m(n, n);
    for (float& v : m.values()) v = rng.uniform(-1.0f, 1.0f);
    auto x = random_vector(n, rng);
    auto y = matvec_dense(m, x);
    EXPECT_LT(worst_relative(y, oracle::matvec(m, x), m, x), 1e-6);
  }
}

TEST(MatvecDenseTest, DimensionMismatchThrows) {
  DenseMatrix m(3, 4);
  EXPECT_THROW(matvec_dense(m, std::vector<float>(3)), InputError);
}

TEST(MatvecBlockSparseTest, SingleColumnBlock) {
  std::vector<std::uint16_t> w(16);
  for (int i = 0; i < 16; ++i) w[i] = float_to_half(0.25f * (i + 1));
  BlockSparseMatrix s(32, 8, kBlock16x1, {0, 1, 1}, {5}, w);
  std::vector<float> x = {1, 2, 3, 4, 5, -2.0f, 7, 8};
  auto y = matvec_block_sparse(s, x);
  for (int i = 0; i < 32; ++i) {
    EXPECT_EQ(y[i], i < 16 ? 0.25f * (i + 1) * -2.0f : 0.0f);
  }
}

TEST(MatvecBlockSparseTest, DenseMaskMatchesDenseOnRoundedWeights) {
  Rng rng(2);
  for (BlockShape shape : {kBlock1x1, kBlock4x4, kBlock16x1}) {
    DenseMatrix m(64, 48);
    for (float& v : m.values()) v = rng.uniform(-1.0f, 1.0f);
    auto s = compress(m, SparsityMask(64, 48, shape, true));
    auto rounded = decompress(s);
    auto x = random_vector(48, rng);
    auto y = matvec_block_sparse(s, x);
    EXPECT_LT(worst_relative(y, oracle::matvec(rounded, x), rounded, x), 1e-6);
  }
}

TEST(MatvecBlockSparseTest, HighSparsityMatchesDenseOracle) {
  Rng rng(3);
  auto w = random_weight_matrix({1024, 1024, 0.95, kBlock16x1}, rng);
  auto dense = w.to_dense();
  auto x = random_vector(1024, rng);
  std::vector<float> y(1024);
  w.multiply(x, y);
  EXPECT_LT(worst_relative(y, oracle::matvec(dense, x), dense, x), 1e-6);
}

TEST(MatvecBlockSparseTest, RowSubsetsAndBatchesAreBitIdentical) {
  Rng rng(4);
  for (BlockShape shape : {kBlock1x1, kBlock4x4, kBlock16x1}) {
    auto w = random_weight_matrix({96, 80, 0.7, shape}, rng);
    std::vector<std::vector<float>> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(random_vector(80, rng));
    std::vector<std::vector<float>> single(3, std::vector<float>(96));
    for (int i = 0; i < 3; ++i) w.multiply(xs[i], single[i]);

    std::vector<std::vector<float>> batched(3, std::vector<float>(96));
    std::vector<std::span<const float>> in(xs.begin(), xs.end());
    std::vector<std::span<float>> out(batched.begin(), batched.end());
    w.multiply_batch(in, out);
    EXPECT_EQ(batched, single);

    std::vector<float> split(96);
    const auto& s = w.sparse();
    matvec_block_sparse_rows(s, xs[0], split, 0, s.block_rows() / 2);
    matvec_block_sparse_rows(s, xs[0], split, s.block_rows() / 2, s.block_rows());
    EXPECT_EQ(split, single[0]);
  }
}

TEST(MatvecBlockSparseTest, DimensionMismatchThrows) {
  auto s = compress(DenseMatrix(16, 16), SparsityMask(16, 16, kBlock4x4, true));
  EXPECT_THROW(matvec_block_sparse(s, std::vector<float>(15)), InputError);
}

TEST(MatvecBenchTest, ReportsPositiveMetrics) {
  BenchmarkOptions opts;
  opts.repetitions = 3;
  opts.min_sample_ns = 1e4;
  auto t = benchmark_matvec({224, 224, 0.0, kBlock1x1}, opts);
  EXPECT_GT(t.median_ns, 0.0);
  EXPECT_GT(t.gbytes_per_s, 0.0);
  EXPECT_GT(t.gflops_per_s, 0.0);
  EXPECT_EQ(t.weight_bytes, 224u * 224u * 4u);
}

TEST(MatvecBenchTest, ChecksumsAreDeterministic) {
  BenchmarkOptions opts;
  opts.repetitions = 2;
  opts.min_sample_ns = 1e4;
  MatvecSpec spec{256, 256, 0.9, kBlock4x4};
  auto a = benchmark_matvec(spec, opts);
  auto b = benchmark_matvec(spec, opts);
  EXPECT_EQ(a.checksum, b.checksum);
  EXPECT_EQ(a.weight_bytes, a.stored_weights * 2);
  opts.threads = 2;
  auto c = benchmark_matvec(spec, opts);
  EXPECT_EQ(a.checksum, c.checksum);
}

}  // namespace
}  // namespace wavernn
