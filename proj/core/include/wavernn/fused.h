#pragma once

// The fused subscale variant. A waveform is split into two interleaved
// lanes (even and odd samples) and one cell step emits a sample of each:
// eight 4-bit parts, coarse-high, coarse-low, fine-high, fine-low for lane
// 0 followed by the same for lane 1. Lane 1 trails lane 0 by two
// positions, so each step emits 32 bits and lane 1 sees lane 0's next two
// samples through the inputs. No conditioning net is involved.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "wavernn/cell.h"
#include "wavernn/trainer.h"

namespace wavernn {

inline constexpr std::size_t kFusedLanes = 2;
inline constexpr std::size_t kFusedLag = 2;
inline constexpr std::size_t kFusedBitsPerStep = 32;

// Nibbles of a 16-bit sample, most significant first.
std::array<std::uint8_t, 4> sample_nibbles(std::uint16_t u);
std::uint16_t nibbles_to_sample(std::span<const std::uint8_t> nibbles);

CellConfig fused_config(std::size_t state_size, std::size_t proj_width = 0);

// Cell steps needed for n samples: n / 2 + kFusedLag.
std::size_t fused_steps(std::size_t n);

// Sample of `lane` emitted at step t, if that lane is active then.
bool fused_lane_active(std::size_t lane, std::size_t t, std::size_t lane_length);
std::size_t fused_lane_position(std::size_t lane, std::size_t t);

struct FusedGenerateResult {
  std::vector<std::uint16_t> samples;
  std::size_t steps = 0;
  std::size_t bits_per_step = kFusedBitsPerStep;
  double samples_per_second = 0.0;
};

// n must be even. Inactive lanes are fed the midpoint sample.
FusedGenerateResult fused_generate(const CellParams& p, std::size_t n, Rng& rng);

// Teacher-forced NLL in nats per sample over the whole waveform (even
// length).
double fused_sequence_nll(const CellParams& p,
                          std::span<const std::uint16_t> waveform);

// Training batch over whole segments (even, equal lengths), one step per
// cell step; inactive lanes have no targets.
SequenceBatch make_fused_batch(
    const CellConfig& config,
    std::span<const std::span<const std::uint16_t>> segments);

// Random windows of `sequence_length` samples (rounded down to even).
BatchSource fused_segment_source(
    const CellConfig& config,
    std::shared_ptr<const std::vector<std::vector<std::uint16_t>>> corpus,
    std::size_t sequence_length, std::size_t batch_size);

}  // namespace wavernn
