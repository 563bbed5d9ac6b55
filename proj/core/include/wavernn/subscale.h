#pragma once

// Subscale generation. A waveform of length n is folded into B interleaved
// sub-tensors of length n / B. Sub-tensor s is generated after sub-tensor
// s - 1, with the cell conditioned on a window of the earlier sub-tensors
// that reaches at most F positions into their future. Because lane s only
// needs lane s - 1 to be F positions ahead, lanes can run concurrently with
// a lag of F steps between them.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "wavernn/cell.h"
#include "wavernn/cond_net.h"
#include "wavernn/trainer.h"

namespace wavernn {

inline constexpr std::uint16_t kMidpointValue = 32768;

struct SubscaleConfig {
  std::size_t batch_factor = 8;  // B
  std::size_t horizon = 128;     // F
  std::size_t lookahead = 64;    // L: positions conditioned per block

  void validate() const;  // throws InputError

  friend bool operator==(const SubscaleConfig&, const SubscaleConfig&) = default;
};

using SubTensorSet = std::vector<std::vector<std::uint16_t>>;

// Sub-tensor s holds u[s], u[s + B], u[s + 2B], ... Throws InputError when
// the length is not a multiple of B.
SubTensorSet fold(std::span<const std::uint16_t> u, std::size_t batch_factor);
// Right-pads with the midpoint value up to a multiple of B first.
SubTensorSet fold_padded(std::span<const std::uint16_t> u, std::size_t batch_factor);
// Inverse of fold; `length` trims padding (0 keeps everything).
std::vector<std::uint16_t> unfold(const SubTensorSet& subs, std::size_t length = 0);

// Absolute indices sample (i, s) may depend on:
//   {B j + s : j < i}  U  {B k + z : z < s, 0 <= k <= i + F}
// sorted ascending. Indices at or past B * sub_length are dropped.
std::vector<std::size_t> dependency_set(
    std::size_t i, std::size_t s, const SubscaleConfig& config,
    std::size_t sub_length = std::numeric_limits<std::size_t>::max());

// Conditioning rows [begin, end) for lane s. Channel 2z carries sub-tensor
// z scaled to [-1, 1] and channel 2z + 1 is 1, for z < s; the channels of
// later sub-tensors are 0. `produced[z]` counts the generated positions of
// sub-tensor z; InputError names the missing range when the net would read
// beyond it.
DenseMatrix cond_forward(const CondNet& net, const SubTensorSet& subs,
                         std::span<const std::size_t> produced, std::size_t s,
                         std::size_t sub_length, std::size_t begin,
                         std::size_t end);

struct SubscaleModel {
  SubscaleConfig config;
  CellParams cell;  // plain cell with cond_dim = net.output_dim()
  CondNet net;

  // Also requires receptive_field <= F - 1 when B > 1: lane s - 1 produces
  // position i + F in the same step as lane s produces position i.
  void validate() const;

  static SubscaleModel random(const SubscaleConfig& config,
                              std::size_t state_size, CondNetConfig net_config,
                              std::uint64_t seed, float gain = 1.0f);
};

// Reference generator: sub-tensors one after another, lane s drawing from
// Rng::substream(seed, s).
std::vector<std::uint16_t> sequential_generate(const SubscaleModel& model,
                                               std::size_t n, std::uint64_t seed);

// First global step of lane s.
constexpr std::size_t lane_start_step(std::size_t s, const SubscaleConfig& c) {
  return s * c.horizon;
}
// Lanes started by step t (before any lane has finished).
constexpr std::size_t started_lanes(std::size_t t, const SubscaleConfig& c) {
  const std::size_t n = t / c.horizon + 1;
  return n < c.batch_factor ? n : c.batch_factor;
}

struct ScheduleRow {
  std::size_t step = 0;
  std::size_t active_lanes = 0;
  std::size_t emitted_samples = 0;  // cumulative
};

enum class LaneExecution {
  batched,   // one batched product per step on the calling thread
  threaded,  // one lane per worker thread, barrier per step
};

struct BatchedResult {
  std::vector<std::uint16_t> waveform;
  std::vector<ScheduleRow> trace;
  double samples_per_second = 0.0;
};

// Lane s starts at step s * F. Output is bit-identical to
// sequential_generate with the same seed.
BatchedResult batched_generate(const SubscaleModel& model, std::size_t n,
                               std::uint64_t seed,
                               LaneExecution mode = LaneExecution::batched,
                               std::size_t threads = 0);

struct LaneReplay {
  std::uint16_t sample = 0;
  std::vector<double> coarse_probs;
  std::vector<double> fine_probs;
};

// Teacher-forced replay of lane s up to position i on the waveform
// `context`, consuming lane s's random stream as generation does. The
// result at (i, s) must only depend on dependency_set(i, s) of `context`.
LaneReplay replay_lane(const SubscaleModel& model,
                       std::span<const std::uint16_t> context, std::size_t i,
                       std::size_t s, std::uint64_t seed);

struct AblationReport {
  std::size_t checked = 0;     // (position, perturbation) pairs outside the set
  std::size_t violations = 0;  // of those, pairs that changed the replay
  std::size_t controls = 0;    // in-set perturbations tried
  std::size_t control_hits = 0;
};

// Perturbs every sample outside each dependency set (and, as a positive
// control, the previous sample of the same lane) and replays.
AblationReport ablation_check(const SubscaleModel& model,
                              std::span<const std::uint16_t> context,
                              std::uint64_t seed);

// Training windows for the cell of a subscale model with a frozen
// conditioning net: (sequence_length + 1) * B samples are folded, one lane
// is drawn, and its conditioning rows come from the net.
BatchSource subscale_segment_source(
    std::shared_ptr<const SubscaleModel> model,
    std::shared_ptr<const std::vector<std::vector<std::uint16_t>>> corpus,
    std::size_t sequence_length, std::size_t batch_size);

}  // namespace wavernn
