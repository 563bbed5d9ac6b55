#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.h"
#include "wavernn/cell.h"

namespace wavernn {
namespace {

CellParams random_params(std::size_t h, std::size_t cond_dim, std::uint64_t seed,
                         float gain = 1.0f) {
  Rng rng(seed);
  auto cfg = CellConfig::wavernn(h, cond_dim);
  auto t = random_tensors(cfg, rng, gain);
  for (float& v : t.gate_bias.values()) v = rng.uniform(-0.5f, 0.5f);
  for (auto& head : t.heads) {
    for (float& v : head.hidden_bias.values()) v = rng.uniform(-0.5f, 0.5f);
    for (float& v : head.logits_bias.values()) v = rng.uniform(-0.5f, 0.5f);
  }
  return CellParams::from_tensors(cfg, t);
}

std::vector<std::uint16_t> random_waveform(std::size_t n, Rng& rng) {
  std::vector<std::uint16_t> w(n);
  for (auto& v : w) v = static_cast<std::uint16_t>(rng.below(65536));
  return w;
}

double sum(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

TEST(EncodeTest, Endpoints) {
  auto lo = encode_sample(0);
  EXPECT_EQ(lo.pair, (SamplePair{0, 0}));
  EXPECT_EQ(lo.coarse_scaled, -1.0f);
  EXPECT_EQ(lo.fine_scaled, -1.0f);
  auto hi = encode_sample(65535);
  EXPECT_EQ(hi.pair, (SamplePair{255, 255}));
  EXPECT_EQ(hi.coarse_scaled, 1.0f);
  EXPECT_EQ(hi.fine_scaled, 1.0f);
  auto mid = encode_sample(258);
  EXPECT_EQ(mid.pair, (SamplePair{1, 2}));
  EXPECT_FLOAT_EQ(mid.coarse_scaled, 2.0f / 255.0f - 1.0f);
  EXPECT_FLOAT_EQ(mid.fine_scaled, 4.0f / 255.0f - 1.0f);
  EXPECT_THROW(encode_sample(-1), InputError);
  EXPECT_THROW(encode_sample(65536), InputError);
}

TEST(EncodeTest, DecodeInvertsEncode) {
  EXPECT_EQ(decode_sample({0, 0}), 0);
  EXPECT_EQ(decode_sample({255, 255}), 65535);
  EXPECT_EQ(decode_sample({128, 0}), 32768);
  for (long u = 0; u < 65536; ++u) {
    ASSERT_EQ(decode_sample(encode_sample(u).pair), u);
  }
}

TEST(CellConfigTest, Validates) {
  EXPECT_THROW(CellConfig::wavernn(7).validate(), InputError);
  EXPECT_THROW(CellConfig::wavernn(0).validate(), InputError);
  EXPECT_NO_THROW(CellConfig::wavernn(2).validate());
  CellConfig fused{CellKind::fused, 12, 0, 0};
  EXPECT_THROW(fused.validate(), InputError);
}

TEST(GatePreactivationsTest, ZeroParamsGiveBiases) {
  auto cfg = CellConfig::wavernn(8);
  auto t = CellTensors<float>::zeros(cfg);
  for (std::size_t i = 0; i < 24; ++i) t.gate_bias(i, 0) = 0.1f * i;
  auto p = CellParams::from_tensors(cfg, t);
  auto g = gate_preactivations(p, CellState::zeros(8),
                               std::vector<float>{0.3f, -0.2f, 0.9f});
  for (std::size_t gate = 0; gate < 3; ++gate) {
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_EQ(g.preactivation(gate, i), 0.1f * (gate * 8 + i));
    }
  }
}

TEST(GatePreactivationsTest, CurrentCoarseDoesNotReachCoarseRows) {
  auto p = random_params(16, 2, 11);
  CellState h{std::vector<float>(16, 0.3f)};
  std::vector<float> x = {0.1f, -0.4f, -1.0f, 0.5f, 0.2f};
  auto a = gate_preactivations(p, h, x);
  x[2] = 0.77f;
  auto b = gate_preactivations(p, h, x);
  for (std::size_t gate = 0; gate < 3; ++gate) {
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_EQ(a.preactivation(gate, i), b.preactivation(gate, i));
    }
    bool fine_changed = false;
    for (std::size_t i = 8; i < 16; ++i) {
      fine_changed |= a.preactivation(gate, i) != b.preactivation(gate, i);
    }
    EXPECT_TRUE(fine_changed);
  }
}

TEST(GatePreactivationsTest, MatchesUnstackedOracle) {
  auto p = random_params(24, 3, 12, 0.3f);
  auto t = p.tensors();
  Rng rng(13);
  CellState h = CellState::zeros(24);
  for (float& v : h.h) v = rng.uniform(-1.0f, 1.0f);
  std::vector<float> x(6);
  for (float& v : x) v = rng.uniform(-1.0f, 1.0f);
  auto g = gate_preactivations(p, h, x);
  auto masked = t.input;
  apply_input_mask(p.config, masked);
  for (std::size_t gate = 0; gate < 3; ++gate) {
    for (std::size_t i = 0; i < 24; ++i) {
      double ref = t.gate_bias(gate * 24 + i, 0);
      for (std::size_t j = 0; j < 24; ++j) {
        ref += static_cast<double>(t.recurrent(gate * 24 + i, j)) * h.h[j];
      }
      for (std::size_t j = 0; j < 6; ++j) {
        ref += static_cast<double>(masked(gate * 24 + i, j)) * x[j];
      }
      EXPECT_NEAR(g.preactivation(gate, i), ref, 1e-6 * std::max(1.0, std::fabs(ref)));
    }
  }
}

TEST(CellParamsTest, RejectsMaskViolation) {
  auto p = random_params(8, 0, 14);
  p.input(0, kCurrentCoarseInput) = 0.5f;
  EXPECT_THROW(p.validate(), InputError);
}

TEST(CoarseStepTest, ZeroParamsAreUniform) {
  auto p = CellParams::zeros(CellConfig::wavernn(8));
  Rng rng(1);
  auto c = coarse_step(p, CellState::zeros(8), {3, 4}, {}, rng);
  for (double v : c.probs) EXPECT_DOUBLE_EQ(v, 1.0 / 256.0);
  auto f = fine_step(p, c, c.coarse, rng);
  for (double v : f.probs) EXPECT_DOUBLE_EQ(v, 1.0 / 256.0);
}

TEST(CoarseStepTest, SeededSamplingIsDeterministic) {
  auto p = random_params(16, 0, 15);
  Rng a(99), b(99);
  auto ca = coarse_step(p, CellState::zeros(16), {10, 20}, {}, a);
  auto cb = coarse_step(p, CellState::zeros(16), {10, 20}, {}, b);
  EXPECT_EQ(ca.coarse, cb.coarse);
}

TEST(CoarseStepTest, ProbabilitiesMatchOracle) {
  auto p = random_params(16, 2, 16);
  auto t = p.tensors();
  Rng rng(17);
  CellState h = CellState::zeros(16);
  for (float& v : h.h) v = rng.uniform(-1.0f, 1.0f);
  const std::vector<float> cond = {0.2f, -0.7f};
  auto c = coarse_step(p, h, {40, 200}, cond, rng);
  auto f = fine_step(p, c, 77, rng);
  EXPECT_NEAR(sum(c.probs), 1.0, 1e-6);
  EXPECT_NEAR(sum(f.probs), 1.0, 1e-6);

  std::vector<double> h64(h.h.begin(), h.h.end());
  std::vector<float> x = {scale_byte(40), scale_byte(200), scale_byte(77), 0.2f,
                          -0.7f};
  auto ref = oracle::cell_step(p.config, t, h64, x);
  auto pc = oracle::softmax(ref.logits[0]);
  auto pf = oracle::softmax(ref.logits[1]);
  for (std::size_t k = 0; k < 256; ++k) {
    EXPECT_NEAR(c.probs[k], pc[k], 1e-6);
    EXPECT_NEAR(f.probs[k], pf[k], 1e-6);
  }
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(f.state.h[i], ref.state[i], 1e-6);

  // Step NLL against the oracle.
  const double nll = -std::log(c.probs[12]) - std::log(f.probs[34]);
  EXPECT_NEAR(nll, -std::log(pc[12]) - std::log(oracle::softmax(ref.logits[1])[34]),
              1e-5);
}

TEST(FineStepTest, CoarseHalfIsUnchangedAndFineDependsOnCurrentCoarse) {
  auto p = random_params(16, 0, 18);
  Rng rng(19);
  auto c = coarse_step(p, CellState::zeros(16), {1, 2}, {}, rng);
  auto f1 = fine_step(p, c, 10, rng);
  auto f2 = fine_step(p, c, 200, rng);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(f1.state.h[i], c.context.state.h[i]);
    EXPECT_EQ(f2.state.h[i], c.context.state.h[i]);
  }
  EXPECT_NE(f1.probs, f2.probs);
}

TEST(CoarseStepTest, PlaceholderIsIrrelevant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = random_params(16, 1, 100 + seed);
    Rng r1(seed), r2(seed);
    const std::vector<float> cond = {0.3f};
    auto a = coarse_step(p, CellState::zeros(16), {9, 9}, cond, r1, 0.0f);
    auto b = coarse_step(p, CellState::zeros(16), {9, 9}, cond, r2, 0.93f);
    EXPECT_EQ(a.probs, b.probs);
    EXPECT_EQ(a.context.state, b.context.state);
  }
}

TEST(SampleStepTest, UsesFiveProductsAndIsDeterministic) {
  auto p = random_params(16, 0, 20);
  Rng a(5);
  auto r = sample_step(p, CellState::zeros(16), kMidpointSample, {}, a);
  EXPECT_EQ(r.products, 5u);
  Rng c(7), d(7);
  EXPECT_EQ(generate(p, 64, {}, c).samples, generate(p, 64, {}, d).samples);
  Rng e(8);
  EXPECT_EQ(generate(p, 1, {}, e).samples.size(), 1u);
}

TEST(SampleStepTest, OpInventory) {
  auto stacked = sample_op_inventory(CellConfig::wavernn(1024));
  std::size_t products = 0;
  for (const auto& op : stacked) products += op.count;
  EXPECT_EQ(products, 5u);

  auto ops = sample_op_inventory(CellConfig::wavernn(1024), false);
  ASSERT_EQ(ops.size(), 3u);
  EXPECT_EQ(ops[0].count, 3u);
  EXPECT_EQ(ops[0].inputs, 1024u);
  EXPECT_EQ(ops[0].outputs, 1024u);
  EXPECT_EQ(ops[1].count, 2u);
  EXPECT_EQ(ops[1].inputs, 512u);
  EXPECT_EQ(ops[1].outputs, 512u);
  EXPECT_EQ(ops[2].count, 2u);
  EXPECT_EQ(ops[2].inputs, 512u);
  EXPECT_EQ(ops[2].outputs, 256u);
}

TEST(SampleStepTest, DenseAndFullyDenseSparseAgree) {
  auto p = random_params(32, 0, 21);
  auto t = p.tensors();
  auto masks = CellMasks::dense(p.config, kBlock16x1);
  auto sp = CellParams::from_tensors(p.config, t, &masks);
  EXPECT_TRUE(sp.recurrent.is_sparse());
  Rng rng(22);
  CellState h = CellState::zeros(32);
  for (float& v : h.h) v = rng.uniform(-1.0f, 1.0f);
  Rng r1(1), r2(1);
  auto a = coarse_step(p, h, {5, 6}, {}, r1);
  auto b = coarse_step(sp, h, {5, 6}, {}, r2);
  for (std::size_t k = 0; k < 256; ++k) {
    EXPECT_NEAR(std::log(a.probs[k]), std::log(b.probs[k]), 1e-2);
  }
}

TEST(SampleStepTest, GateRangesAndConvexUpdate) {
  auto p = random_params(16, 0, 23, 3.0f);
  auto t = p.tensors();
  Rng rng(24);
  CellState h = CellState::zeros(16);
  for (float& v : h.h) v = rng.uniform(-1.0f, 1.0f);
  std::vector<float> x = {0.1f, 0.9f, -0.3f};
  auto g = gate_preactivations(p, h, x);
  for (std::size_t i = 0; i < 16; ++i) {
    const float u = 1.0f / (1.0f + std::exp(-g.preactivation(0, i)));
    const float r = 1.0f / (1.0f + std::exp(-g.preactivation(1, i)));
    const float e = std::tanh(r * g.recurrent[32 + i] + g.input[32 + i]);
    EXPECT_GT(u, 0.0f);
    EXPECT_LT(u, 1.0f);
    EXPECT_GT(e, -1.0f);
    EXPECT_LT(e, 1.0f);
    auto ctx = begin_step(p, h, x);
    advance_part(p, ctx);
    advance_part(p, ctx);
    EXPECT_GE(ctx.state.h[i], std::min(h.h[i], e) - 1e-6f);
    EXPECT_LE(ctx.state.h[i], std::max(h.h[i], e) + 1e-6f);
  }
}

TEST(SequenceNllTest, ZeroParamsGiveLn65536) {
  auto p = CellParams::zeros(CellConfig::wavernn(8));
  Rng rng(25);
  auto w = random_waveform(50, rng);
  EXPECT_NEAR(sequence_nll(p, w), std::log(65536.0), 1e-9);
}

TEST(SequenceNllTest, MatchesOracle) {
  auto p = random_params(16, 2, 26);
  Rng rng(27);
  auto w = random_waveform(40, rng);
  DenseMatrix cond(39, 2);
  for (float& v : cond.values()) v = rng.uniform(-1.0f, 1.0f);
  const double nll = sequence_nll(p, w, cond);
  const double ref = oracle::sequence_nll(p.config, p.tensors(), w, cond);
  EXPECT_NEAR(nll, ref, 1e-6 * ref);
}

TEST(SequenceNllTest, RejectsShortInput) {
  auto p = CellParams::zeros(CellConfig::wavernn(8));
  EXPECT_THROW(sequence_nll(p, std::vector<std::uint16_t>{1}), InputError);
}

TEST(SequenceNllTest, NonFiniteWeightsRaiseNumericError) {
  auto cfg = CellConfig::wavernn(8);
  auto t = CellTensors<float>::zeros(cfg);
  t.heads[0].logits_bias(3, 0) = INFINITY;
  auto p = CellParams::from_tensors(cfg, t);
  std::vector<std::uint16_t> w = {1, 2, 3};
  try {
    sequence_nll(p, w);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.step(), 0u);
  }
}

TEST(SampleCategoricalTest, InverseCdf) {
  std::vector<double> p = {0.25, 0.0, 0.5, 0.25};
  EXPECT_EQ(sample_categorical(p, 0.0f), 0u);
  EXPECT_EQ(sample_categorical(p, 0.2499f), 0u);
  EXPECT_EQ(sample_categorical(p, 0.25f), 2u);
  EXPECT_EQ(sample_categorical(p, 0.75f), 3u);
  EXPECT_EQ(sample_categorical(p, 0.9999999f), 3u);
}

}  // namespace
}  // namespace wavernn
