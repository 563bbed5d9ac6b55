#include "wavernn/fused.h"

#include <chrono>
#include <cmath>
#include <string>

#include "wavernn/errors.h"

namespace wavernn {

namespace {

constexpr std::size_t kParts = 8;
constexpr std::uint16_t kPlaceholder = 32768;

void check_fused(const CellConfig& c) {
  c.validate();
  if (c.kind != CellKind::fused) throw InputError("expected a fused cell");
}

std::size_t lane_length(std::size_t n) {
  if (n == 0 || n % kFusedLanes != 0) {
    throw InputError("fused length " + std::to_string(n) +
                     " must be a positive even number");
  }
  return n / kFusedLanes;
}

std::array<std::uint8_t, kParts> midpoint_nibbles() {
  std::array<std::uint8_t, kParts> out{};
  const auto mid = sample_nibbles(kPlaceholder);
  for (std::size_t k = 0; k < kParts; ++k) out[k] = mid[k % 4];
  return out;
}

// The eight nibbles of step t, with the midpoint standing in for lanes
// that are not active.
std::array<std::uint8_t, kParts> step_nibbles(std::span<const std::uint16_t> u,
                                              std::size_t t) {
  const std::size_t len = u.size() / kFusedLanes;
  std::array<std::uint8_t, kParts> out{};
  for (std::size_t lane = 0; lane < kFusedLanes; ++lane) {
    std::uint16_t v = kPlaceholder;
    if (fused_lane_active(lane, t, len)) {
      v = u[fused_lane_position(lane, t) * kFusedLanes + lane];
    }
    const auto n = sample_nibbles(v);
    for (std::size_t k = 0; k < 4; ++k) out[lane * 4 + k] = n[k];
  }
  return out;
}

std::vector<float> step_input(std::span<const std::uint8_t> previous) {
  std::vector<float> x(15, 0.0f);
  for (std::size_t k = 0; k < kParts; ++k) x[k] = scale_level(previous[k], 16);
  return x;
}

}  // namespace

std::array<std::uint8_t, 4> sample_nibbles(std::uint16_t u) {
  return {static_cast<std::uint8_t>(u >> 12), static_cast<std::uint8_t>((u >> 8) & 15),
          static_cast<std::uint8_t>((u >> 4) & 15), static_cast<std::uint8_t>(u & 15)};
}

std::uint16_t nibbles_to_sample(std::span<const std::uint8_t> n) {
  if (n.size() != 4) throw InputError("a sample has four nibbles");
  unsigned v = 0;
  for (std::uint8_t x : n) {
    if (x > 15) throw InputError("nibble out of range");
    v = v * 16 + x;
  }
  return static_cast<std::uint16_t>(v);
}

CellConfig fused_config(std::size_t state_size, std::size_t proj_width) {
  CellConfig c{CellKind::fused, state_size, 0, proj_width};
  c.validate();
  return c;
}

std::size_t fused_steps(std::size_t n) { return lane_length(n) + kFusedLag; }

bool fused_lane_active(std::size_t lane, std::size_t t, std::size_t len) {
  const std::size_t start = lane * kFusedLag;
  return t >= start && t - start < len;
}

std::size_t fused_lane_position(std::size_t lane, std::size_t t) {
  return t - lane * kFusedLag;
}

FusedGenerateResult fused_generate(const CellParams& p, std::size_t n, Rng& rng) {
  check_fused(p.config);
  const std::size_t len = lane_length(n);
  FusedGenerateResult out;
  out.samples.assign(n, 0);
  out.steps = fused_steps(n);
  CellState state = CellState::zeros(p.config.state_size);
  std::array<std::uint8_t, kParts> prev = midpoint_nibbles();
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t t = 0; t < out.steps; ++t) {
    StepContext ctx = begin_step(p, state, step_input(prev), t);
    std::array<std::uint8_t, kParts> cur{};
    for (std::size_t q = 0; q < kParts; ++q) {
      const std::size_t lane = q / 4;
      const std::vector<double> probs = advance_part(p, ctx);
      if (fused_lane_active(lane, t, len)) {
        cur[q] = static_cast<std::uint8_t>(sample_categorical(probs, rng.uniform()));
      } else {
        cur[q] = midpoint_nibbles()[q];
      }
      set_part_value(p, ctx, q, cur[q]);
    }
    for (std::size_t lane = 0; lane < kFusedLanes; ++lane) {
      if (!fused_lane_active(lane, t, len)) continue;
      out.samples[fused_lane_position(lane, t) * kFusedLanes + lane] =
          nibbles_to_sample(std::span<const std::uint8_t>(cur).subspan(lane * 4, 4));
    }
    state = std::move(ctx.state);
    prev = cur;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  out.samples_per_second = secs > 0.0 ? static_cast<double>(n) / secs : 0.0;
  return out;
}

double fused_sequence_nll(const CellParams& p,
                          std::span<const std::uint16_t> u) {
  check_fused(p.config);
  const std::size_t len = lane_length(u.size());
  CellState state = CellState::zeros(p.config.state_size);
  std::array<std::uint8_t, kParts> prev = midpoint_nibbles();
  double total = 0.0;
  for (std::size_t t = 0; t < fused_steps(u.size()); ++t) {
    const auto cur = step_nibbles(u, t);
    StepContext ctx = begin_step(p, state, step_input(prev), t);
    for (std::size_t q = 0; q < kParts; ++q) {
      const std::vector<double> probs = advance_part(p, ctx);
      if (fused_lane_active(q / 4, t, len)) total -= std::log(probs[cur[q]]);
      set_part_value(p, ctx, q, cur[q]);
    }
    state = std::move(ctx.state);
    prev = cur;
  }
  return total / static_cast<double>(u.size());
}

SequenceBatch make_fused_batch(
    const CellConfig& c, std::span<const std::span<const std::uint16_t>> segments) {
  check_fused(c);
  if (segments.empty()) throw InputError("no segments");
  const std::size_t n = segments[0].size();
  const std::size_t len = lane_length(n);
  const std::size_t steps = fused_steps(n);
  SequenceBatch b(segments.size(), steps, c.input_dim(), c.parts());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto seg = segments[s];
    if (seg.size() != n) throw InputError("segments must have equal length");
    auto prev = midpoint_nibbles();
    for (std::size_t t = 0; t < steps; ++t) {
      const auto cur = step_nibbles(seg, t);
      for (std::size_t q = 0; q < kParts; ++q) {
        b.input(t, s, q) = scale_level(prev[q], 16);
        if (q < kParts - 1) b.input(t, s, kParts + q) = scale_level(cur[q], 16);
        b.target(t, s, q) = fused_lane_active(q / 4, t, len) ? cur[q] : -1;
      }
      prev = cur;
    }
  }
  return b;
}

BatchSource fused_segment_source(
    const CellConfig& c,
    std::shared_ptr<const std::vector<std::vector<std::uint16_t>>> corpus,
    std::size_t sequence_length, std::size_t batch_size) {
  check_fused(c);
  const std::size_t n = sequence_length / 2 * 2;
  if (n == 0 || batch_size == 0) {
    throw InputError("sequence length and batch size must be positive");
  }
  std::vector<std::size_t> usable;
  for (std::size_t k = 0; k < corpus->size(); ++k) {
    if ((*corpus)[k].size() >= n) usable.push_back(k);
  }
  if (usable.empty()) {
    throw InputError("no utterance holds " + std::to_string(n) + " samples");
  }
  return [c, corpus, usable, n, batch_size](std::size_t, Rng& rng) {
    std::vector<std::span<const std::uint16_t>> segs;
    for (std::size_t k = 0; k < batch_size; ++k) {
      const auto& u = (*corpus)[usable[rng.below(usable.size())]];
      const std::size_t offset = rng.below((u.size() - n) / 2 + 1) * 2;
      segs.push_back(std::span<const std::uint16_t>(u).subspan(offset, n));
    }
    return make_fused_batch(c, segs);
  };
}

}  // namespace wavernn
