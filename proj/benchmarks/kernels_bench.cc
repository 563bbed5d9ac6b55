#include <benchmark/benchmark.h>

#include "wavernn/cell.h"
#include "wavernn/fused.h"
#include "wavernn/matvec_bench.h"
#include "wavernn/subscale.h"
#include "wavernn/trainer.h"

namespace wavernn {
namespace {

BlockShape shape_arg(std::int64_t code) {
  return code == 0 ? kBlock1x1 : code == 1 ? kBlock4x4 : kBlock16x1;
}

// Args: size, sparsity in percent (0 = dense 32-bit), block code.
void BM_Matvec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const MatvecSpec spec{n, n, static_cast<double>(state.range(1)) / 100.0,
                        shape_arg(state.range(2))};
  Rng rng(1);
  const WeightMatrix w = random_weight_matrix(spec, rng);
  std::vector<float> x(n), y(n);
  for (float& v : x) v = rng.uniform(-1.0f, 1.0f);
  for (auto _ : state) {
    w.multiply(x, y);
    benchmark::DoNotOptimize(y.data());
    benchmark::ClobberMemory();
  }
  state.counters["weight_bytes"] = static_cast<double>(w.stored_bytes());
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * w.stored_bytes()));
  state.SetLabel(spec.type_label());
}
BENCHMARK(BM_Matvec)
    ->Args({1024, 0, 0})
    ->Args({1024, 90, 1})
    ->Args({1024, 90, 2})
    ->Args({1024, 95, 1})
    ->Args({1024, 95, 2})
    ->Args({1792, 95, 2});

CellParams sparse_cell(std::size_t h, double z) {
  Rng rng(2);
  const CellConfig cfg = CellConfig::wavernn(h);
  auto t = random_tensors(cfg, rng);
  if (z == 0.0) return CellParams::from_tensors(cfg, t);
  const CellMasks masks = update_cell_masks(cfg, t, kBlock16x1, z);
  masks.apply(t);
  return CellParams::from_tensors(cfg, t, &masks);
}

// Full sampling step of the plain cell. Args: state size, sparsity percent.
void BM_SampleStep(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const CellParams p = sparse_cell(h, static_cast<double>(state.range(1)) / 100.0);
  CellState s = CellState::zeros(h);
  SamplePair prev = kMidpointSample;
  Rng rng(3);
  for (auto _ : state) {
    auto r = sample_step(p, s, prev, {}, rng);
    s = std::move(r.state);
    prev = r.sample;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SampleStep)->Args({384, 0})->Args({896, 0})->Args({896, 95})->Args({1024, 95});

void BM_FusedGenerate(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  Rng init(4);
  const CellConfig cfg = fused_config(h);
  const CellParams p = CellParams::from_tensors(cfg, random_tensors(cfg, init));
  for (auto _ : state) {
    Rng rng(5);
    benchmark::DoNotOptimize(fused_generate(p, 512, rng).samples.data());
  }
  state.SetItemsProcessed(state.iterations() * 512);
}
BENCHMARK(BM_FusedGenerate)->Arg(256);

// Subscale generation with lanes batched into one product per step.
// Args: B, threaded (0/1).
void BM_SubscaleGenerate(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const std::size_t f = 16;
  const SubscaleModel m =
      SubscaleModel::random({b, f, 64}, 256, CondNetConfig::for_horizon(b, f, 16), 6);
  const auto mode = state.range(1) ? LaneExecution::threaded : LaneExecution::batched;
  const std::size_t n = b * 256;
  for (auto _ : state) {
    benchmark::DoNotOptimize(batched_generate(m, n, 7, mode).waveform.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_SubscaleGenerate)->UseRealTime()->Args({1, 0})->Args({4, 0})->Args({8, 0})->Args({4, 1});

}  // namespace
}  // namespace wavernn

BENCHMARK_MAIN();
