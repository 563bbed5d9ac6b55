#include "wavernn/subscale.h"

#include <algorithm>
#include <chrono>
#include <string>

#include "wavernn/errors.h"
#include "wavernn/parallel.h"

namespace wavernn {

void SubscaleConfig::validate() const {
  if (batch_factor == 0) throw InputError("subscale batch factor must be positive");
  if (horizon == 0) throw InputError("subscale horizon must be positive");
  if (lookahead == 0) throw InputError("subscale lookahead must be positive");
}

SubTensorSet fold(std::span<const std::uint16_t> u, std::size_t b) {
  if (b == 0) throw InputError("batch factor must be positive");
  if (u.size() % b != 0) {
    throw InputError("length " + std::to_string(u.size()) +
                     " is not a multiple of the batch factor " + std::to_string(b));
  }
  const std::size_t len = u.size() / b;
  SubTensorSet out(b, std::vector<std::uint16_t>(len));
  for (std::size_t j = 0; j < len; ++j) {
    for (std::size_t s = 0; s < b; ++s) out[s][j] = u[j * b + s];
  }
  return out;
}

SubTensorSet fold_padded(std::span<const std::uint16_t> u, std::size_t b) {
  if (b == 0) throw InputError("batch factor must be positive");
  std::vector<std::uint16_t> padded(u.begin(), u.end());
  padded.resize((u.size() + b - 1) / b * b, kMidpointValue);
  return fold(padded, b);
}

std::vector<std::uint16_t> unfold(const SubTensorSet& subs, std::size_t length) {
  if (subs.empty()) return {};
  const std::size_t b = subs.size();
  const std::size_t len = subs[0].size();
  for (const auto& s : subs) {
    if (s.size() != len) throw InputError("sub-tensors differ in length");
  }
  std::vector<std::uint16_t> out(b * len);
  for (std::size_t j = 0; j < len; ++j) {
    for (std::size_t s = 0; s < b; ++s) out[j * b + s] = subs[s][j];
  }
  if (length != 0) {
    if (length > out.size()) throw InputError("unfold length exceeds the data");
    out.resize(length);
  }
  return out;
}

std::vector<std::size_t> dependency_set(std::size_t i, std::size_t s,
                                        const SubscaleConfig& c,
                                        std::size_t sub_length) {
  const std::size_t b = c.batch_factor;
  if (s >= b) throw InputError("sub-tensor index out of range");
  std::vector<std::size_t> out;
  const std::size_t limit =
      sub_length == std::numeric_limits<std::size_t>::max() ? sub_length
                                                             : sub_length * b;
  for (std::size_t j = 0; j < i; ++j) {
    if (b * j + s < limit) out.push_back(b * j + s);
  }
  if (s > 0) {
    for (std::size_t k = 0; k <= i + c.horizon; ++k) {
      for (std::size_t z = 0; z < s; ++z) {
        if (b * k + z < limit) out.push_back(b * k + z);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

DenseMatrix cond_forward(const CondNet& net, const SubTensorSet& subs,
                         std::span<const std::size_t> produced, std::size_t s,
                         std::size_t sub_length, std::size_t begin,
                         std::size_t end) {
  const std::size_t channels = net.config().input_channels;
  if (s * 2 > channels) {
    throw InputError("conditioning net has " + std::to_string(channels) +
                     " input channels, lane " + std::to_string(s) + " needs " +
                     std::to_string(2 * s));
  }
  if (subs.size() < s || produced.size() < s) {
    throw InputError("lane " + std::to_string(s) + " needs " +
                     std::to_string(s) + " earlier sub-tensors");
  }
  // The net reads positions up to end - 1 + receptive_field, clipped to the
  // sequence.
  const std::size_t need =
      std::min(sub_length, end + net.config().receptive_field());
  for (std::size_t z = 0; z < s; ++z) {
    if (subs[z].size() < sub_length) {
      throw InputError("sub-tensor " + std::to_string(z) + " is shorter than " +
                       std::to_string(sub_length));
    }
    if (produced[z] < need) {
      throw InputError("conditioning lane " + std::to_string(s) +
                       " positions [" + std::to_string(begin) + ", " +
                       std::to_string(end) + ") needs sub-tensor " +
                       std::to_string(z) + " positions [" +
                       std::to_string(produced[z]) + ", " +
                       std::to_string(need) + ") which are not generated yet");
    }
  }
  const auto input = [&](std::size_t p, std::size_t c) -> float {
    const std::size_t z = c / 2;
    if (z >= s) return 0.0f;
    if (c % 2 == 1) return 1.0f;
    return static_cast<float>(subs[z][p]) / 32767.5f - 1.0f;
  };
  return net.forward(input, sub_length, begin, end);
}

void SubscaleModel::validate() const {
  config.validate();
  net.validate();
  cell.validate();
  if (cell.config.kind != CellKind::wavernn) {
    throw InputError("subscale models use the plain cell");
  }
  if (net.config().input_channels != 2 * config.batch_factor) {
    throw InputError("conditioning net needs " +
                     std::to_string(2 * config.batch_factor) + " input channels");
  }
  if (cell.config.cond_dim != net.output_dim()) {
    throw InputError("cell conditioning width " +
                     std::to_string(cell.config.cond_dim) +
                     " does not match the conditioning net output " +
                     std::to_string(net.output_dim()));
  }
  if (config.batch_factor > 1 &&
      net.config().receptive_field() + 1 > config.horizon) {
    throw InputError("conditioning receptive field " +
                     std::to_string(net.config().receptive_field()) +
                     " must be below the horizon " +
                     std::to_string(config.horizon));
  }
}

SubscaleModel SubscaleModel::random(const SubscaleConfig& config,
                                    std::size_t state_size,
                                    CondNetConfig net_config, std::uint64_t seed,
                                    float gain) {
  net_config.input_channels = 2 * config.batch_factor;
  Rng rng(seed);
  SubscaleModel m;
  m.config = config;
  m.net = CondNet::random(net_config, rng, gain);
  const CellConfig cell = CellConfig::wavernn(state_size, m.net.output_dim());
  m.cell = CellParams::from_tensors(cell, random_tensors(cell, rng, gain));
  m.validate();
  return m;
}

namespace {

std::size_t check_length(const SubscaleModel& m, std::size_t n) {
  m.validate();
  if (n == 0 || n % m.config.batch_factor != 0) {
    throw InputError("length " + std::to_string(n) +
                     " must be a positive multiple of the batch factor " +
                     std::to_string(m.config.batch_factor));
  }
  return n / m.config.batch_factor;
}

}  // namespace

std::vector<std::uint16_t> sequential_generate(const SubscaleModel& m,
                                               std::size_t n, std::uint64_t seed) {
  const std::size_t len = check_length(m, n);
  const std::size_t b = m.config.batch_factor;
  SubTensorSet subs(b, std::vector<std::uint16_t>(len, 0));
  std::vector<std::size_t> produced(b, 0);
  for (std::size_t s = 0; s < b; ++s) {
    Rng rng = Rng::substream(seed, s);
    const DenseMatrix cond = cond_forward(m.net, subs, produced, s, len, 0, len);
    CellState state = CellState::zeros(m.cell.config.state_size);
    SamplePair prev = kMidpointSample;
    for (std::size_t i = 0; i < len; ++i) {
      auto r = sample_step(m.cell, state, prev, cond.row(i), rng, i);
      state = std::move(r.state);
      prev = r.sample;
      subs[s][i] = prev.value();
    }
    produced[s] = len;
  }
  return unfold(subs);
}

namespace {

struct Lane {
  explicit Lane(Rng r) : rng(r) {}
  Rng rng;
  CellState state;
  SamplePair prev = kMidpointSample;
  DenseMatrix cond;
  std::size_t cond_begin = 0;
  std::size_t cond_end = 0;
  StepContext ctx;
};

class LaneRunner {
 public:
  LaneRunner(const SubscaleModel& m, std::size_t len, std::uint64_t seed)
      : m_(m),
        b_(m.config.batch_factor),
        len_(len),
        subs_(b_, std::vector<std::uint16_t>(len, 0)),
        visible_(b_, 0) {
    lanes_.reserve(b_);
    for (std::size_t s = 0; s < b_; ++s) {
      lanes_.emplace_back(Rng::substream(seed, s));
      lanes_.back().state = CellState::zeros(m.cell.config.state_size);
    }
  }

  std::size_t steps() const { return (b_ - 1) * m_.config.horizon + len_; }

  bool active(std::size_t s, std::size_t t) const {
    const std::size_t start = lane_start_step(s, m_.config);
    return t >= start && t < start + len_;
  }
  std::size_t position(std::size_t s, std::size_t t) const {
    return t - lane_start_step(s, m_.config);
  }

  // Conditioning rows for lane s must cover position i. A block reaches
  // L positions ahead, limited by what the previous lane has produced.
  std::span<const float> cond_row(std::size_t s, std::size_t i) {
    Lane& lane = lanes_[s];
    if (i >= lane.cond_end) {
      std::size_t end = std::min(i + m_.config.lookahead, len_);
      const std::size_t rf = m_.net.config().receptive_field();
      for (std::size_t z = 0; z < s; ++z) {
        if (visible_[z] < len_) {
          end = std::min(end, visible_[z] > rf ? visible_[z] - rf : 0);
        }
      }
      if (end <= i) end = i + 1;  // cond_forward reports the missing range
      lane.cond = cond_forward(m_.net, subs_, visible_, s, len_, i, end);
      lane.cond_begin = i;
      lane.cond_end = end;
    }
    return lane.cond.row(i - lane.cond_begin);
  }

  void step_one(std::size_t s, std::size_t t) {
    Lane& lane = lanes_[s];
    const std::size_t i = position(s, t);
    auto r = sample_step(m_.cell, lane.state, lane.prev, cond_row(s, i),
                         lane.rng, i);
    lane.state = std::move(r.state);
    lane.prev = r.sample;
    subs_[s][i] = lane.prev.value();
  }

  void step_batched(std::size_t t) {
    std::vector<std::size_t> ids;
    for (std::size_t s = 0; s < b_; ++s) {
      if (active(s, t)) ids.push_back(s);
    }
    std::vector<StepContext*> ctxs;
    std::vector<const CellState*> states;
    for (std::size_t s : ids) {
      Lane& lane = lanes_[s];
      const std::size_t i = position(s, t);
      lane.ctx.x = make_input(m_.cell.config, lane.prev, 0.0f, cond_row(s, i));
      lane.ctx.step = i;
      ctxs.push_back(&lane.ctx);
      states.push_back(&lane.state);
    }
    begin_step_batch(m_.cell, ctxs, states);
    std::vector<std::vector<double>> probs(ids.size());
    std::vector<SamplePair> out(ids.size());
    advance_part_batch(m_.cell, ctxs, probs);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Lane& lane = lanes_[ids[k]];
      out[k].coarse = static_cast<std::uint8_t>(
          sample_categorical(probs[k], lane.rng.uniform()));
      set_part_value(m_.cell, lane.ctx, 0, out[k].coarse);
    }
    advance_part_batch(m_.cell, ctxs, probs);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Lane& lane = lanes_[ids[k]];
      out[k].fine = static_cast<std::uint8_t>(
          sample_categorical(probs[k], lane.rng.uniform()));
      lane.state = std::move(lane.ctx.state);
      lane.prev = out[k];
      subs_[ids[k]][position(ids[k], t)] = out[k].value();
    }
  }

  // Values written during a step become visible to other lanes afterwards.
  void publish(std::size_t t) {
    for (std::size_t s = 0; s < b_; ++s) {
      if (active(s, t)) visible_[s] = position(s, t) + 1;
    }
  }

  std::size_t active_count(std::size_t t) const {
    std::size_t n = 0;
    for (std::size_t s = 0; s < b_; ++s) n += active(s, t) ? 1 : 0;
    return n;
  }

  std::vector<std::uint16_t> waveform() const { return unfold(subs_); }

 private:
  const SubscaleModel& m_;
  std::size_t b_;
  std::size_t len_;
  SubTensorSet subs_;
  std::vector<std::size_t> visible_;
  std::vector<Lane> lanes_;
};

}  // namespace

BatchedResult batched_generate(const SubscaleModel& m, std::size_t n,
                               std::uint64_t seed, LaneExecution mode,
                               std::size_t threads) {
  const std::size_t len = check_length(m, n);
  const std::size_t b = m.config.batch_factor;
  LaneRunner runner(m, len, seed);
  BatchedResult result;
  const std::size_t total = runner.steps();
  result.trace.reserve(total);
  std::size_t emitted = 0;
  const auto start = std::chrono::steady_clock::now();
  if (mode == LaneExecution::batched) {
    for (std::size_t t = 0; t < total; ++t) {
      runner.step_batched(t);
      runner.publish(t);
      const std::size_t a = runner.active_count(t);
      emitted += a;
      result.trace.push_back({t, a, emitted});
    }
  } else {
    const std::size_t workers = std::clamp<std::size_t>(threads ? threads : b, 1, b);
    LaneTeam team(workers);
    for (std::size_t t = 0; t < total; ++t) {
      team.run([&](std::size_t w) {
        for (std::size_t s = w; s < b; s += workers) {
          if (runner.active(s, t)) runner.step_one(s, t);
        }
      });
      runner.publish(t);
      const std::size_t a = runner.active_count(t);
      emitted += a;
      result.trace.push_back({t, a, emitted});
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  result.samples_per_second = secs > 0.0 ? static_cast<double>(n) / secs : 0.0;
  result.waveform = runner.waveform();
  return result;
}

LaneReplay replay_lane(const SubscaleModel& m,
                       std::span<const std::uint16_t> context, std::size_t i,
                       std::size_t s, std::uint64_t seed) {
  const std::size_t len = check_length(m, context.size());
  if (s >= m.config.batch_factor || i >= len) {
    throw InputError("replay position out of range");
  }
  const SubTensorSet subs = fold(context, m.config.batch_factor);
  const std::vector<std::size_t> produced(m.config.batch_factor, len);
  const DenseMatrix cond = cond_forward(m.net, subs, produced, s, len, 0, i + 1);
  Rng rng = Rng::substream(seed, s);
  CellState state = CellState::zeros(m.cell.config.state_size);
  SamplePair prev = kMidpointSample;
  for (std::size_t j = 0; j < i; ++j) {
    // Generation draws one uniform per part; the state follows the context.
    rng.uniform();
    rng.uniform();
    const SamplePair forced = SamplePair::from(subs[s][j]);
    StepContext ctx = begin_step(
        m.cell, state, make_input(m.cell.config, prev, 0.0f, cond.row(j)), j);
    advance_part(m.cell, ctx);
    set_part_value(m.cell, ctx, 0, forced.coarse);
    advance_part(m.cell, ctx);
    state = std::move(ctx.state);
    prev = forced;
  }
  CoarsePhase coarse = coarse_step(m.cell, state, prev, cond.row(i), rng, 0.0f, i);
  LaneReplay out;
  out.coarse_probs = coarse.probs;
  const std::uint8_t c = coarse.coarse;
  FinePhase fine = fine_step(m.cell, std::move(coarse), c, rng);
  out.fine_probs = std::move(fine.probs);
  out.sample = SamplePair{c, fine.fine}.value();
  return out;
}

AblationReport ablation_check(const SubscaleModel& m,
                              std::span<const std::uint16_t> context,
                              std::uint64_t seed) {
  const std::size_t len = check_length(m, context.size());
  const std::size_t b = m.config.batch_factor;
  AblationReport report;
  std::vector<std::uint16_t> work(context.begin(), context.end());
  const auto same = [](const LaneReplay& a, const LaneReplay& x) {
    return a.sample == x.sample && a.coarse_probs == x.coarse_probs &&
           a.fine_probs == x.fine_probs;
  };
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t i = 0; i < len; ++i) {
      const LaneReplay base = replay_lane(m, work, i, s, seed);
      const auto deps = dependency_set(i, s, m.config, len);
      std::vector<char> inside(work.size(), 0);
      for (std::size_t d : deps) inside[d] = 1;
      for (std::size_t idx = 0; idx < work.size(); ++idx) {
        if (inside[idx]) continue;
        const std::uint16_t saved = work[idx];
        work[idx] = static_cast<std::uint16_t>(saved ^ 0x8421u);
        ++report.checked;
        if (!same(base, replay_lane(m, work, i, s, seed))) ++report.violations;
        work[idx] = saved;
      }
      if (i > 0) {
        const std::size_t idx = (i - 1) * b + s;
        const std::uint16_t saved = work[idx];
        work[idx] = static_cast<std::uint16_t>(saved ^ 0x8000u);
        ++report.controls;
        if (!same(base, replay_lane(m, work, i, s, seed))) ++report.control_hits;
        work[idx] = saved;
      }
    }
  }
  return report;
}

BatchSource subscale_segment_source(
    std::shared_ptr<const SubscaleModel> model,
    std::shared_ptr<const std::vector<std::vector<std::uint16_t>>> corpus,
    std::size_t sequence_length, std::size_t batch_size) {
  model->validate();
  const std::size_t b = model->config.batch_factor;
  const std::size_t window = sequence_length + 1;
  const std::size_t rf = model->net.config().receptive_field();
  std::vector<std::size_t> usable;
  for (std::size_t k = 0; k < corpus->size(); ++k) {
    if ((*corpus)[k].size() / b >= window) usable.push_back(k);
  }
  if (usable.empty()) {
    throw InputError("no utterance holds " + std::to_string(window * b) +
                     " samples");
  }
  if (sequence_length == 0 || batch_size == 0) {
    throw InputError("sequence length and batch size must be positive");
  }
  return [model, corpus, usable, b, window, rf, batch_size](std::size_t,
                                                            Rng& rng) {
    std::vector<std::vector<std::uint16_t>> segments;
    std::vector<DenseMatrix> conds;
    for (std::size_t k = 0; k < batch_size; ++k) {
      const auto& u = (*corpus)[usable[rng.below(usable.size())]];
      const std::size_t positions = u.size() / b;
      const std::size_t first = rng.below(positions - window + 1);
      // Conditioning only looks forward, so a window with rf positions of
      // lookahead reproduces the rows of the whole utterance.
      const std::size_t span_len = std::min(positions - first, window + rf);
      const SubTensorSet subs = fold(
          std::span<const std::uint16_t>(u).subspan(first * b, span_len * b), b);
      const std::size_t s = rng.below(b);
      const std::vector<std::size_t> produced(b, span_len);
      conds.push_back(
          cond_forward(model->net, subs, produced, s, span_len, 1, window));
      segments.emplace_back(subs[s].begin(), subs[s].begin() + window);
    }
    std::vector<std::span<const std::uint16_t>> views(segments.begin(),
                                                      segments.end());
    return make_sequence_batch(model->cell.config, views, conds);
  };
}

}  // namespace wavernn
