#pragma once

// Maximum-likelihood training of the cell with full back-propagation
// through time, plus gradual magnitude pruning.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wavernn/cell.h"
#include "wavernn/rng.h"
#include "wavernn/sparse.h"

namespace wavernn {

// Teacher-forced training data for a batch of equal-length sequences.
// Inputs hold every value of the step, including those sampled earlier in
// the same step; the input mask keeps each part from seeing its own target.
struct SequenceBatch {
  std::size_t sequences = 0;
  std::size_t steps = 0;
  std::size_t input_dim = 0;
  std::size_t parts = 0;
  std::vector<float> inputs;          // [step][sequence][input_dim]
  std::vector<std::int32_t> targets;  // [step][sequence][part], -1 = none

  SequenceBatch() = default;
  SequenceBatch(std::size_t sequences, std::size_t steps, std::size_t input_dim,
                std::size_t parts);

  float& input(std::size_t step, std::size_t seq, std::size_t col) {
    return inputs[(step * sequences + seq) * input_dim + col];
  }
  float input(std::size_t step, std::size_t seq, std::size_t col) const {
    return inputs[(step * sequences + seq) * input_dim + col];
  }
  std::int32_t& target(std::size_t step, std::size_t seq, std::size_t part) {
    return targets[(step * sequences + seq) * parts + part];
  }
  std::int32_t target(std::size_t step, std::size_t seq, std::size_t part) const {
    return targets[(step * sequences + seq) * parts + part];
  }
  std::size_t target_count() const;
};

// Builds a plain-cell batch. A segment of n samples gives n - 1 steps; row
// k of the segment's conditioning matrix is used at step k.
SequenceBatch make_sequence_batch(
    const CellConfig& config,
    std::span<const std::span<const std::uint16_t>> segments,
    std::span<const DenseMatrix> conds = {});

template <class T>
struct LossAndGradients {
  double loss = 0.0;  // mean NLL in nats per sample
  CellTensors<T> gradients;
};

// Exact gradients of the mean NLL over the batch. The input matrix is
// masked in the forward pass and its gradient is masked as well. Throws
// NumericError (carrying `batch_index`) when the loss is not finite.
template <class T>
LossAndGradients<T> forward_backward(const CellConfig& config,
                                     const CellTensors<T>& params,
                                     const SequenceBatch& batch,
                                     std::size_t batch_index = 0);

template <class T>
double forward_loss(const CellConfig& config, const CellTensors<T>& params,
                    const SequenceBatch& batch);

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // global gradient norm limit; 0 disables
};

class Optimizer {
 public:
  Optimizer(const CellConfig& config, OptimizerConfig options);

  // Applies one update and re-zeroes masked coordinates of R, the head
  // matrices (when `masks` is given) and the masked input columns.
  void update(CellTensors<float>& params, const CellTensors<float>& grads,
              const CellMasks* masks);

  std::size_t steps() const noexcept { return step_; }
  const OptimizerConfig& options() const noexcept { return options_; }

 private:
  CellConfig config_;
  OptimizerConfig options_;
  CellTensors<float> m_;
  CellTensors<float> v_;
  std::size_t step_ = 0;
};

struct PruneSchedule {
  double target = 0.95;    // Z
  long start = 1000;       // t0
  long duration = 200000;  // S
  long cadence = 500;      // steps between mask updates
  BlockShape block = kBlock16x1;

  void validate() const;  // throws InputError
};

// z(t) = Z (1 - (1 - (t - t0)/S)^3), clamped to [0, Z].
double prune_fraction(long t, const PruneSchedule& schedule);

// Clears the floor(z * blocks) blocks with the smallest mean magnitude.
// Ties go to blocks that `previous` already pruned, then to lower indices,
// so a mask recomputed on re-masked weights never revives a block.
SparsityMask update_mask(const DenseMatrix& weights, BlockShape block, double z,
                         const SparsityMask* previous = nullptr);

// update_mask applied to each gate block of R and to every head matrix
// separately.
CellMasks update_cell_masks(const CellConfig& config,
                            const CellTensors<float>& params, BlockShape block,
                            double z, const CellMasks* previous = nullptr);

struct MatrixSparsity {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t weights = 0;
  std::size_t nonzero = 0;  // retained by the mask (all, when unmasked)
  double sparsity = 0.0;
  bool prunable = false;
  // histogram[k] = blocks holding exactly k nonzero values.
  std::vector<std::size_t> block_histogram;
};

struct SparsityReport {
  std::vector<MatrixSparsity> matrices;
  std::size_t total_parameters = 0;
  std::size_t total_nonzero = 0;
  double prunable_sparsity = 0.0;  // over R and the head matrices
};

SparsityReport sparsity_report(const CellConfig& config,
                               const CellTensors<float>& params,
                               const CellMasks* masks = nullptr);

// Parameter count of a dense cell, biases included.
std::size_t dense_parameter_count(const CellConfig& config);

// Even state size whose dense parameter count is closest to `budget`.
std::size_t matched_dense_state_size(std::size_t budget, std::size_t cond_dim = 0);

using BatchSource = std::function<SequenceBatch(std::size_t step, Rng& rng)>;

// Random windows of sequence_length + 1 samples from the corpus.
BatchSource random_segment_source(
    const CellConfig& config,
    std::shared_ptr<const std::vector<std::vector<std::uint16_t>>> corpus,
    std::size_t sequence_length, std::size_t batch_size);

struct TrainConfig {
  std::size_t sequence_length = 960;
  std::size_t batch_size = 8;
  std::size_t steps = 3000;
  std::uint64_t seed = 1;
  float init_gain = 1.0f;
  OptimizerConfig optimizer;
  std::optional<PruneSchedule> prune;

  void validate() const;  // throws InputError
};

struct TrainRecord {
  std::size_t step = 0;  // 1-based
  double nll = 0.0;
  double sparsity = 0.0;
};

struct TrainState {
  CellTensors<float> params;
  CellMasks masks;  // all-retained when there is no schedule
  std::vector<TrainRecord> history;
};

struct TrainHooks {
  // Called after each step.
  std::function<void(const TrainRecord&)> on_step;
  // Called with the last good state before a NumericError propagates.
  std::function<void(const TrainState&)> on_abort;
};

TrainState train(const CellConfig& config, const TrainConfig& options,
                 const BatchSource& batches, const TrainHooks& hooks = {},
                 const CellTensors<float>* initial = nullptr);

// Inference parameters for a trained state: block-sparse 16-bit storage
// when a schedule pruned the model, dense otherwise.
CellParams export_params(const CellConfig& config, const TrainState& state,
                         bool sparse);

}  // namespace wavernn
