#include <gtest/gtest.h>

#include <cmath>

#include "oracles.h"
#include "wavernn/errors.h"
#include "wavernn/fused.h"

namespace wavernn {
namespace {

CellTensors<float> random_fused(std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  const CellConfig cfg = fused_config(h);
  auto t = random_tensors(cfg, rng);
  for (float& v : t.gate_bias.values()) v = rng.uniform(-0.5f, 0.5f);
  for (auto& head : t.heads) {
    for (float& v : head.logits_bias.values()) v = rng.uniform(-1.0f, 1.0f);
  }
  return t;
}

std::vector<std::uint16_t> random_wave(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint16_t> u(n);
  for (auto& v : u) v = static_cast<std::uint16_t>(rng.below(65536));
  return u;
}

// Per-step nibbles under the two-lane schedule, midpoint when inactive.
std::vector<std::array<std::uint8_t, 8>> schedule(
    const std::vector<std::uint16_t>& u) {
  const std::size_t len = u.size() / 2;
  std::vector<std::array<std::uint8_t, 8>> out;
  for (std::size_t t = 0; t < len + 2; ++t) {
    std::array<std::uint8_t, 8> step{};
    for (std::size_t lane = 0; lane < 2; ++lane) {
      const long pos = static_cast<long>(t) - 2 * static_cast<long>(lane);
      const std::uint16_t v = pos >= 0 && pos < static_cast<long>(len)
                                  ? u[static_cast<std::size_t>(pos) * 2 + lane]
                                  : 32768;
      step[lane * 4 + 0] = v >> 12;
      step[lane * 4 + 1] = (v >> 8) & 15;
      step[lane * 4 + 2] = (v >> 4) & 15;
      step[lane * 4 + 3] = v & 15;
    }
    out.push_back(step);
  }
  return out;
}

struct OracleStep {
  std::array<std::uint8_t, 8> values;
  std::vector<std::vector<double>> probs;
  bool active[2];
};

std::vector<OracleStep> oracle_run(const CellTensors<float>& t,
                                   const std::vector<std::uint16_t>& u) {
  const CellConfig cfg = fused_config(t.recurrent.cols());
  const auto steps = schedule(u);
  const std::size_t len = u.size() / 2;
  std::vector<double> h(cfg.state_size, 0.0);
  std::array<std::uint8_t, 8> prev{8, 0, 0, 0, 8, 0, 0, 0};
  std::vector<OracleStep> out;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    std::vector<float> x(15);
    for (std::size_t q = 0; q < 8; ++q) x[q] = 2.0f * prev[q] / 15.0f - 1.0f;
    for (std::size_t q = 0; q < 7; ++q) x[8 + q] = 2.0f * steps[k][q] / 15.0f - 1.0f;
    const auto r = oracle::cell_step(cfg, t, h, x);
    OracleStep s{steps[k], {}, {k < len, k >= 2 && k - 2 < len}};
    for (const auto& l : r.logits) s.probs.push_back(oracle::softmax(l));
    out.push_back(s);
    h = r.state;
    prev = steps[k];
  }
  return out;
}

TEST(FusedTest, NibbleRoundTrip) {
  const auto n = sample_nibbles(0xabcd);
  EXPECT_EQ(n, (std::array<std::uint8_t, 4>{0xa, 0xb, 0xc, 0xd}));
  for (unsigned v : {0u, 1u, 255u, 32768u, 65535u}) {
    const auto x = sample_nibbles(static_cast<std::uint16_t>(v));
    EXPECT_EQ(nibbles_to_sample(x), v);
  }
}

TEST(FusedTest, StepArithmetic) {
  EXPECT_EQ(fused_steps(10), 7u);
  EXPECT_THROW(fused_steps(9), InputError);
  EXPECT_TRUE(fused_lane_active(0, 0, 5));
  EXPECT_FALSE(fused_lane_active(1, 1, 5));
  EXPECT_TRUE(fused_lane_active(1, 2, 5));
  EXPECT_FALSE(fused_lane_active(0, 5, 5));
  EXPECT_TRUE(fused_lane_active(1, 6, 5));
}

TEST(FusedTest, ZeroModelIsUniform) {
  const CellParams p = CellParams::zeros(fused_config(16));
  for (std::uint64_t seed : {1u, 2u}) {
    EXPECT_NEAR(fused_sequence_nll(p, random_wave(40, seed)), 4 * std::log(16.0),
                1e-9);
  }
  EXPECT_NEAR(4 * std::log(16.0), std::log(65536.0), 1e-12);
}

TEST(FusedTest, EmitsThirtyTwoBitsPerStep) {
  const CellParams p = CellParams::from_tensors(fused_config(16), random_fused(16, 3));
  Rng rng(1);
  const auto r = fused_generate(p, 100, rng);
  EXPECT_EQ(r.samples.size(), 100u);
  EXPECT_EQ(r.steps, 52u);
  EXPECT_EQ(r.bits_per_step, 32u);
  EXPECT_EQ(r.bits_per_step, 8 * 4u);
}

TEST(FusedTest, DeterministicUnderSeed) {
  const CellParams p = CellParams::from_tensors(fused_config(16), random_fused(16, 4));
  Rng a(9), b(9), c(10);
  const auto x = fused_generate(p, 64, a).samples;
  EXPECT_EQ(x, fused_generate(p, 64, b).samples);
  EXPECT_NE(x, fused_generate(p, 64, c).samples);
}

TEST(FusedTest, NllMatchesOracle) {
  const auto t = random_fused(24, 5);
  const CellParams p = CellParams::from_tensors(fused_config(24), t);
  const auto u = random_wave(30, 6);
  double expected = 0.0;
  for (const auto& s : oracle_run(t, u)) {
    for (std::size_t q = 0; q < 8; ++q) {
      if (s.active[q / 4]) expected -= std::log(s.probs[q][s.values[q]]);
    }
  }
  expected /= 30.0;
  EXPECT_NEAR(fused_sequence_nll(p, u), expected, 1e-4 * expected);
}

TEST(FusedTest, GenerationFollowsOracleDistribution) {
  const auto t = random_fused(16, 7);
  const CellParams p = CellParams::from_tensors(fused_config(16), t);
  Rng rng(21);
  const auto u = fused_generate(p, 40, rng).samples;
  Rng draws(21);
  for (const auto& s : oracle_run(t, u)) {
    for (std::size_t q = 0; q < 8; ++q) {
      if (!s.active[q / 4]) continue;
      const double x = draws.uniform();
      double below = 0.0;
      for (std::size_t k = 0; k < s.values[q]; ++k) below += s.probs[q][k];
      EXPECT_LE(below, x + 1e-5);
      EXPECT_GT(below + s.probs[q][s.values[q]], x - 1e-5);
    }
  }
}

TEST(FusedTest, LaneOneSeesNextLaneZeroSamples) {
  // Lane 1's sample at step t may depend on lane 0 up to position t, which
  // is two positions ahead of lane 1's own position t - 2.
  const auto t = random_fused(16, 8);
  const CellParams p = CellParams::from_tensors(fused_config(16), t);
  auto u = random_wave(20, 9);
  const auto base = oracle_run(t, u);
  u[2 * 6] ^= 0x8000;  // lane 0, position 6, emitted at step 6
  const auto changed = oracle_run(t, u);
  // Step 6 emits lane 1 position 4; its probabilities move.
  EXPECT_NE(base[6].probs[4], changed[6].probs[4]);
  EXPECT_EQ(base[6].probs[0], changed[6].probs[0]);
  EXPECT_EQ(base[5].probs[7], changed[5].probs[7]);
}

TEST(FusedTest, BatchLossMatchesSequenceNll) {
  const CellConfig cfg = fused_config(16);
  const auto t = random_fused(16, 10);
  const CellParams p = CellParams::from_tensors(cfg, t);
  const auto u = random_wave(24, 11);
  const std::vector<std::span<const std::uint16_t>> segs{u};
  const SequenceBatch batch = make_fused_batch(cfg, segs);
  EXPECT_EQ(batch.steps, 14u);
  EXPECT_EQ(batch.target_count(), 24u * 4);
  EXPECT_NEAR(forward_loss(cfg, t.cast<double>(), batch),
              fused_sequence_nll(p, u), 1e-4);
}

TEST(FusedTest, TrainingReducesLoss) {
  const CellConfig cfg = fused_config(32);
  auto corpus = std::make_shared<const std::vector<std::vector<std::uint16_t>>>(
      std::vector<std::vector<std::uint16_t>>(2, std::vector<std::uint16_t>(400, 30000)));
  TrainConfig opts;
  opts.steps = 60;
  opts.batch_size = 2;
  opts.sequence_length = 32;
  opts.optimizer.learning_rate = 1e-2;
  const auto state = train(cfg, opts, fused_segment_source(cfg, corpus, 32, 2), {});
  ASSERT_EQ(state.history.size(), 60u);
  EXPECT_LT(state.history.back().nll, state.history.front().nll - 2.0);
}

}  // namespace
}  // namespace wavernn
