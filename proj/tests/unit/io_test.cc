#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "wavernn/config_file.h"
#include "wavernn/errors.h"
#include "wavernn/fused.h"
#include "wavernn/latency.h"
#include "wavernn/model_io.h"

namespace wavernn {
namespace {

CellTensors<float> noisy_tensors(const CellConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  auto t = random_tensors(cfg, rng);
  for (float& v : t.gate_bias.values()) v = rng.uniform(-1.0f, 1.0f);
  for (auto& h : t.heads) {
    for (float& v : h.hidden_bias.values()) v = rng.uniform(-1.0f, 1.0f);
    for (float& v : h.logits_bias.values()) v = rng.uniform(-1.0f, 1.0f);
  }
  return t;
}

Model sparse_model(std::size_t h, BlockShape block, double z, std::uint64_t seed) {
  const CellConfig cfg = CellConfig::wavernn(h, 2);
  auto t = noisy_tensors(cfg, seed);
  const CellMasks masks = update_cell_masks(cfg, t, block, z);
  masks.apply(t);
  return {CellParams::from_tensors(cfg, t, &masks), std::nullopt, {}};
}

void expect_same(const Model& a, const Model& b) {
  EXPECT_EQ(a.cell.config, b.cell.config);
  EXPECT_EQ(a.cell.tensors(), b.cell.tensors());
  EXPECT_EQ(a.cell.recurrent.is_sparse(), b.cell.recurrent.is_sparse());
  if (a.cell.recurrent.is_sparse()) {
    EXPECT_EQ(a.cell.recurrent.sparse(), b.cell.recurrent.sparse());
  }
  for (std::size_t p = 0; p < a.cell.heads.size(); ++p) {
    EXPECT_EQ(a.cell.heads[p].logits.is_sparse(), b.cell.heads[p].logits.is_sparse());
    if (a.cell.heads[p].logits.is_sparse()) {
      EXPECT_EQ(a.cell.heads[p].logits.sparse(), b.cell.heads[p].logits.sparse());
      EXPECT_EQ(a.cell.heads[p].hidden.sparse(), b.cell.heads[p].hidden.sparse());
    }
  }
  EXPECT_EQ(a.subscale, b.subscale);
  EXPECT_EQ(a.cond_net, b.cond_net);
  EXPECT_EQ(serialize_model(a), serialize_model(b));
}

TEST(ModelIoTest, DenseRoundTrip) {
  const CellConfig cfg = CellConfig::wavernn(12, 3);
  const Model m{CellParams::from_tensors(cfg, noisy_tensors(cfg, 1)), std::nullopt, {}};
  expect_same(m, parse_model(serialize_model(m)));
}

TEST(ModelIoTest, SparseRoundTrip) {
  for (BlockShape block : {kBlock16x1, kBlock4x4, kBlock1x1}) {
    const Model m = sparse_model(32, block, 0.8, 2);
    ASSERT_TRUE(m.cell.recurrent.is_sparse());
    const Model back = parse_model(serialize_model(m));
    expect_same(m, back);
  }
}

TEST(ModelIoTest, FusedRoundTrip) {
  const CellConfig cfg = fused_config(16, 6);
  const Model m{CellParams::from_tensors(cfg, noisy_tensors(cfg, 3)), std::nullopt, {}};
  expect_same(m, parse_model(serialize_model(m)));
}

TEST(ModelIoTest, SubscaleRoundTrip) {
  const SubscaleModel s = SubscaleModel::random({4, 8, 5}, 16,
                                                CondNetConfig::for_horizon(4, 8, 6), 4);
  const Model m = Model::from_subscale(s);
  const Model back = parse_model(serialize_model(m));
  expect_same(m, back);
  const SubscaleModel t = back.to_subscale();
  EXPECT_EQ(sequential_generate(s, 64, 1), sequential_generate(t, 64, 1));
}

TEST(ModelIoTest, MaskBitsAreOnePerBlock) {
  const Model m = sparse_model(32, kBlock16x1, 0.75, 5);
  for (const auto& info : model_tensor_info(m)) {
    if (!info.masked) continue;
    EXPECT_EQ(info.mask_bits * info.block.size(), info.rows * info.cols) << info.name;
    EXPECT_EQ(info.width, 16u);
  }
  const auto bytes = serialize_model(m);
  const auto dense_bytes = serialize_model(
      {CellParams::from_tensors(m.cell.config, m.cell.tensors()), std::nullopt, {}});
  EXPECT_LT(bytes.size(), dense_bytes.size() / 4);
}

TEST(ModelIoTest, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "wavernn_io_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.wrnn").string();
  const Model m = sparse_model(16, kBlock4x4, 0.5, 6);
  save_model(m, path);
  expect_same(m, load_model(path));
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  EXPECT_THROW(load_model((dir / "missing.wrnn").string()), InputError);
  std::filesystem::remove_all(dir);
}

TEST(ModelIoTest, RejectsCorruptInput) {
  const Model m = sparse_model(16, kBlock4x4, 0.5, 7);
  const auto bytes = serialize_model(m);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_model(bad), FormatError);
  bad = bytes;
  bad[4] = 2;  // version
  EXPECT_THROW(parse_model(bad), FormatError);
  for (std::size_t cut = 0; cut < bytes.size(); cut += 97) {
    EXPECT_THROW(parse_model(std::span(bytes).first(cut)), FormatError) << cut;
  }
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(parse_model(bad), FormatError);
}

TEST(ModelIoTest, SparsityReportFromStorage) {
  const CellConfig cfg = CellConfig::wavernn(64, 2);
  auto t = noisy_tensors(cfg, 8);
  const CellMasks masks = update_cell_masks(cfg, t, kBlock16x1, 0.9);
  masks.apply(t);
  const Model m{CellParams::from_tensors(cfg, t, &masks), std::nullopt, {}};
  const auto direct = sparsity_report(cfg, t, &masks);
  const auto stored = model_sparsity_report(m);
  EXPECT_EQ(stored.total_nonzero, direct.total_nonzero);
  EXPECT_EQ(stored.total_parameters, direct.total_parameters);
  EXPECT_DOUBLE_EQ(stored.prunable_sparsity, direct.prunable_sparsity);
  EXPECT_FALSE(storage_masks(CellParams::from_tensors(cfg, t)).has_value());
}

TEST(LatencyTest, OverheadBounds) {
  const auto five = estimate_latency(LatencyModel::uniform(5, 0.0, 5e-6));
  EXPECT_DOUBLE_EQ(five.samples_per_second, 40000.0);
  EXPECT_DOUBLE_EQ(five.overhead_bound, 40000.0);
  EXPECT_EQ(five.binding, "overhead");
  const auto sixty = estimate_latency(LatencyModel::uniform(60, 0.0, 5e-6));
  EXPECT_NEAR(sixty.samples_per_second, 1e6 / 300.0, 1e-9);
  EXPECT_EQ(std::lround(sixty.samples_per_second), 3333);
}

TEST(LatencyTest, SingleComputeTerm) {
  LatencyModel m = LatencyModel::uniform(4, 0.0, 0.0, 24000);
  m.compute_seconds[2] = 2e-6;
  const auto e = estimate_latency(m);
  EXPECT_DOUBLE_EQ(e.total_seconds, 24000 * 2e-6);
  EXPECT_EQ(e.binding, "compute");
  EXPECT_TRUE(std::isinf(e.overhead_bound));
}

TEST(LatencyTest, RejectsBadInput) {
  EXPECT_THROW(LatencyModel::uniform(0, 1.0, 1.0), InputError);
  EXPECT_THROW(LatencyModel::uniform(2, -1.0, 1.0), InputError);
  EXPECT_THROW(estimate_bandwidth(0.0, 1.0, 1.0), InputError);
}

TEST(BandwidthTest, Examples) {
  EXPECT_EQ(estimate_bandwidth(3e6, 24e3, 4), 288e9);
  EXPECT_EQ(estimate_bandwidth(3e6, 24e3, 2), 144e9);
}

TEST(BandwidthTest, SparseModelFromReport) {
  const CellConfig cfg = CellConfig::wavernn(1024);
  // Counting oracle: 95% of R and of every head matrix removed in 16x1
  // blocks, everything else dense.
  const std::size_t h = 1024, ps = 512, in = 3;
  const std::size_t prunable = 3 * h * h + 2 * (ps * ps + 256 * ps);
  const std::size_t kept_prunable =
      3 * (h * h / 16 - static_cast<std::size_t>(0.95 * h * h / 16 + 1e-9)) * 16 +
      2 * ((ps * ps / 16 - static_cast<std::size_t>(0.95 * ps * ps / 16 + 1e-9)) * 16 +
           (256 * ps / 16 - static_cast<std::size_t>(0.95 * 256 * ps / 16 + 1e-9)) * 16);
  const std::size_t dense_rest = 3 * h * in + 3 * h + 2 * (ps + 256);
  EXPECT_EQ(prunable + dense_rest, dense_parameter_count(cfg));

  CellTensors<float> t = CellTensors<float>::zeros(cfg);
  Rng rng(1);
  for (float& v : t.recurrent.values()) v = rng.uniform(-1.0f, 1.0f);
  for (auto& head : t.heads) {
    for (float& v : head.hidden.values()) v = rng.uniform(-1.0f, 1.0f);
    for (float& v : head.logits.values()) v = rng.uniform(-1.0f, 1.0f);
  }
  const CellMasks masks = update_cell_masks(cfg, t, kBlock16x1, 0.95);
  const auto report = sparsity_report(cfg, t, &masks);
  EXPECT_EQ(report.total_nonzero, kept_prunable + dense_rest);
  EXPECT_DOUBLE_EQ(estimate_bandwidth(static_cast<double>(report.total_nonzero), 24e3, 2),
                   static_cast<double>(kept_prunable + dense_rest) * 48e3);
}

TEST(ConfigFileTest, ParsesValues) {
  const auto cfg = KeyValueConfig::parse(
      "# training\nstate_size = 192\nlearning_rate=1e-3 # inline\n\nprune = yes\n"
      "block = 16x1\n");
  EXPECT_EQ(cfg.get_size("state_size", 0), 192u);
  EXPECT_DOUBLE_EQ(cfg.get_double("learning_rate", 0), 1e-3);
  EXPECT_TRUE(cfg.get_bool("prune", false));
  EXPECT_EQ(cfg.get("block", ""), "16x1");
  EXPECT_EQ(cfg.get_size("missing", 7), 7u);
  EXPECT_TRUE(cfg.unused_keys().empty());
}

TEST(ConfigFileTest, ReportsErrors) {
  EXPECT_THROW(KeyValueConfig::parse("a = 1\nnonsense\n"), InputError);
  EXPECT_THROW(KeyValueConfig::parse("a = 1\na = 2\n"), InputError);
  const auto cfg = KeyValueConfig::parse("n = 12x\nflag = maybe\ntypo = 1\n");
  EXPECT_THROW(cfg.get_size("n", 0), InputError);
  EXPECT_THROW(cfg.get_bool("flag", false), InputError);
  EXPECT_EQ(cfg.unused_keys(), std::vector<std::string>{"typo"});
  EXPECT_THROW(KeyValueConfig::load("/nonexistent/file.cfg"), InputError);
}

}  // namespace
}  // namespace wavernn
