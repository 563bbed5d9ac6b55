#include "wavernn/cell.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "wavernn/errors.h"

namespace wavernn {

namespace {

float sigmoid(float a) { return 1.0f / (1.0f + std::exp(-a)); }

void require_shape(const std::string& name, const DenseMatrix& m,
                   std::size_t rows, std::size_t cols) {
  if (m.rows() != rows || m.cols() != cols) {
    throw InputError(name + " has shape " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void require_shape(const std::string& name, const WeightMatrix& m,
                   std::size_t rows, std::size_t cols) {
  if (m.rows() != rows || m.cols() != cols) {
    throw InputError(name + " has shape " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void validate_tensors(const CellConfig& c, const CellTensors<float>& t) {
  const std::size_t h = c.state_size;
  require_shape("recurrent", t.recurrent, 3 * h, h);
  require_shape("input", t.input, 3 * h, c.input_dim());
  require_shape("gate_bias", t.gate_bias, 3 * h, 1);
  if (t.heads.size() != c.parts()) {
    throw InputError("expected " + std::to_string(c.parts()) + " heads, got " +
                     std::to_string(t.heads.size()));
  }
  for (std::size_t p = 0; p < t.heads.size(); ++p) {
    const std::string prefix = "head" + std::to_string(p) + ".";
    require_shape(prefix + "hidden", t.heads[p].hidden, c.hidden_width(),
                  c.part_size());
    require_shape(prefix + "hidden_bias", t.heads[p].hidden_bias,
                  c.hidden_width(), 1);
    require_shape(prefix + "logits", t.heads[p].logits, c.classes(),
                  c.hidden_width());
    require_shape(prefix + "logits_bias", t.heads[p].logits_bias, c.classes(),
                  1);
  }
}

std::vector<float> column(const DenseMatrix& m) {
  return {m.values().begin(), m.values().end()};
}

DenseMatrix as_column(const std::vector<float>& v) {
  return DenseMatrix(v.size(), 1, v);
}

// I* x + b for the rows of `part` in every gate, skipping masked columns.
void part_input(const CellParams& p, StepContext& ctx, std::size_t part) {
  const CellConfig& c = p.config;
  const std::size_t h = c.state_size;
  const std::size_t ps = c.part_size();
  const std::size_t in = c.input_dim();
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t j = part * ps; j < (part + 1) * ps; ++j) {
      const std::size_t r = g * h + j;
      const float* w = p.input.data() + r * in;
      float acc = p.gate_bias[r];
      for (std::size_t col = 0; col < in; ++col) {
        if (part < c.first_part_for_input(col)) continue;
        acc += w[col] * ctx.x[col];
      }
      ctx.gates.input[r] = acc;
    }
  }
}

void part_update(const CellParams& p, StepContext& ctx, std::size_t part) {
  const std::size_t h = p.config.state_size;
  const std::size_t ps = p.config.part_size();
  const auto& rec = ctx.gates.recurrent;
  const auto& inp = ctx.gates.input;
  for (std::size_t j = part * ps; j < (part + 1) * ps; ++j) {
    const float u = sigmoid(rec[j] + inp[j]);
    const float r = sigmoid(rec[h + j] + inp[h + j]);
    const float e = std::tanh(r * rec[2 * h + j] + inp[2 * h + j]);
    ctx.state.h[j] = u * ctx.state.h[j] + (1.0f - u) * e;
  }
}

void add_bias_relu(std::span<float> v, const std::vector<float>& bias) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::max(v[i] + bias[i], 0.0f);
  }
}

std::vector<double> logits_to_probs(std::vector<float>& logits,
                                    const std::vector<float>& bias,
                                    std::size_t step) {
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] += bias[i];
    if (!std::isfinite(logits[i])) {
      throw NumericError("non-finite logits at step " + std::to_string(step),
                         step);
    }
  }
  return softmax(logits);
}

void check_part(const CellParams& p, const StepContext& ctx) {
  if (ctx.next_part >= p.config.parts()) {
    throw InputError("all parts of this step are already resolved");
  }
}

}  // namespace

std::size_t CellConfig::input_dim() const noexcept {
  return kind == CellKind::fused ? 15 : kFirstCondInput + cond_dim;
}

std::size_t CellConfig::first_part_for_input(std::size_t col) const noexcept {
  if (kind == CellKind::fused) return col >= 8 ? col - 8 + 1 : 0;
  return col == kCurrentCoarseInput ? 1 : 0;
}

std::optional<std::size_t> CellConfig::current_input_column(
    std::size_t part) const noexcept {
  if (kind == CellKind::fused) {
    if (part < 7) return 8 + part;
    return std::nullopt;
  }
  if (part == 0) return kCurrentCoarseInput;
  return std::nullopt;
}

void CellConfig::validate() const {
  if (kind != CellKind::wavernn && kind != CellKind::fused) {
    throw InputError("unknown cell kind");
  }
  if (state_size == 0 || state_size % parts() != 0) {
    throw InputError("state size " + std::to_string(state_size) +
                     " must be a positive multiple of " +
                     std::to_string(parts()));
  }
  if (kind == CellKind::fused && cond_dim != 0) {
    throw InputError("the fused cell takes no conditioning input");
  }
}

template <class T>
CellTensors<T> CellTensors<T>::zeros(const CellConfig& c) {
  c.validate();
  const std::size_t h = c.state_size;
  CellTensors<T> t;
  t.recurrent = Matrix<T>(3 * h, h);
  t.input = Matrix<T>(3 * h, c.input_dim());
  t.gate_bias = Matrix<T>(3 * h, 1);
  for (std::size_t p = 0; p < c.parts(); ++p) {
    t.heads.push_back({Matrix<T>(c.hidden_width(), c.part_size()),
                       Matrix<T>(c.hidden_width(), 1),
                       Matrix<T>(c.classes(), c.hidden_width()),
                       Matrix<T>(c.classes(), 1)});
  }
  return t;
}

template struct CellTensors<float>;
template struct CellTensors<double>;

CellTensors<float> random_tensors(const CellConfig& c, Rng& rng, float gain) {
  auto t = CellTensors<float>::zeros(c);
  auto fill = [&](DenseMatrix& m) {
    const float limit =
        gain * std::sqrt(6.0f / static_cast<float>(m.rows() + m.cols()));
    for (float& v : m.values()) v = rng.uniform(-limit, limit);
  };
  // Each gate block gets its own fan-in/fan-out scale.
  {
    const std::size_t h = c.state_size;
    const float limit = gain * std::sqrt(6.0f / static_cast<float>(2 * h));
    for (float& v : t.recurrent.values()) v = rng.uniform(-limit, limit);
    const float in_limit =
        gain * std::sqrt(6.0f / static_cast<float>(h + c.input_dim()));
    for (float& v : t.input.values()) v = rng.uniform(-in_limit, in_limit);
  }
  for (auto& head : t.heads) {
    fill(head.hidden);
    fill(head.logits);
  }
  apply_input_mask(c, t.input);
  return t;
}

CellMasks CellMasks::dense(const CellConfig& c, BlockShape block) {
  c.validate();
  const std::size_t h = c.state_size;
  CellMasks m;
  for (int g = 0; g < 3; ++g) m.gates.emplace_back(h, h, block, true);
  for (std::size_t p = 0; p < c.parts(); ++p) {
    m.hidden.emplace_back(c.hidden_width(), c.part_size(), block, true);
    m.logits.emplace_back(c.classes(), c.hidden_width(), block, true);
  }
  return m;
}

SparsityMask CellMasks::stacked_gates() const {
  return SparsityMask::stack_rows(gates);
}

CellParams CellParams::zeros(const CellConfig& c) {
  return from_tensors(c, CellTensors<float>::zeros(c));
}

CellParams CellParams::from_tensors(const CellConfig& c,
                                    const CellTensors<float>& t,
                                    const CellMasks* masks) {
  c.validate();
  validate_tensors(c, t);
  CellParams p;
  p.config = c;
  p.input = t.input;
  apply_input_mask(c, p.input);
  p.gate_bias = column(t.gate_bias);
  if (masks) {
    if (masks->gates.size() != 3 || masks->hidden.size() != c.parts() ||
        masks->logits.size() != c.parts()) {
      throw InputError("mask set does not match the cell topology");
    }
    p.recurrent = WeightMatrix(compress(t.recurrent, masks->stacked_gates()));
  } else {
    p.recurrent = WeightMatrix(t.recurrent);
  }
  for (std::size_t i = 0; i < c.parts(); ++i) {
    const auto& head = t.heads[i];
    InferenceHead out;
    if (masks) {
      out.hidden = WeightMatrix(compress(head.hidden, masks->hidden[i]));
      out.logits = WeightMatrix(compress(head.logits, masks->logits[i]));
    } else {
      out.hidden = WeightMatrix(head.hidden);
      out.logits = WeightMatrix(head.logits);
    }
    out.hidden_bias = column(head.hidden_bias);
    out.logits_bias = column(head.logits_bias);
    p.heads.push_back(std::move(out));
  }
  return p;
}

CellTensors<float> CellParams::tensors() const {
  CellTensors<float> t;
  t.recurrent = recurrent.to_dense();
  t.input = input;
  t.gate_bias = as_column(gate_bias);
  for (const auto& head : heads) {
    t.heads.push_back({head.hidden.to_dense(), as_column(head.hidden_bias),
                       head.logits.to_dense(), as_column(head.logits_bias)});
  }
  return t;
}

void CellParams::validate() const {
  config.validate();
  const std::size_t h = config.state_size;
  require_shape("recurrent", recurrent, 3 * h, h);
  require_shape("input", input, 3 * h, config.input_dim());
  if (gate_bias.size() != 3 * h) throw InputError("gate bias has wrong length");
  if (heads.size() != config.parts()) throw InputError("wrong number of heads");
  for (const auto& head : heads) {
    require_shape("head hidden", head.hidden, config.hidden_width(),
                  config.part_size());
    require_shape("head logits", head.logits, config.classes(),
                  config.hidden_width());
    if (head.hidden_bias.size() != config.hidden_width() ||
        head.logits_bias.size() != config.classes()) {
      throw InputError("head bias has wrong length");
    }
  }
  const std::size_t ps = config.part_size();
  for (std::size_t r = 0; r < input.rows(); ++r) {
    for (std::size_t col = 0; col < input.cols(); ++col) {
      if ((r % h) / ps < config.first_part_for_input(col) &&
          input(r, col) != 0.0f) {
        throw InputError("input weight (" + std::to_string(r) + ", " +
                         std::to_string(col) +
                         ") violates the input mask");
      }
    }
  }
  auto finite = [](const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(),
                       [](float x) { return std::isfinite(x); });
  };
  if (!input.all_finite() || !finite(gate_bias) ||
      !recurrent.to_dense().all_finite()) {
    throw InputError("cell parameters contain non-finite values");
  }
}

EncodedSample encode_sample(long u) {
  if (u < 0 || u > 65535) {
    throw InputError("sample value " + std::to_string(u) +
                     " is outside [0, 65535]");
  }
  EncodedSample e;
  e.pair = SamplePair::from(static_cast<std::uint16_t>(u));
  e.coarse_scaled = scale_byte(e.pair.coarse);
  e.fine_scaled = scale_byte(e.pair.fine);
  return e;
}

std::uint16_t decode_sample(SamplePair pair) { return pair.value(); }

std::vector<float> make_input(const CellConfig& c, SamplePair prev,
                              float current_coarse,
                              std::span<const float> cond) {
  if (c.kind != CellKind::wavernn) {
    throw InputError("make_input builds inputs for the plain cell only");
  }
  if (cond.size() != c.cond_dim) {
    throw InputError("conditioning vector has " + std::to_string(cond.size()) +
                     " values, expected " + std::to_string(c.cond_dim));
  }
  std::vector<float> x(c.input_dim());
  x[kPrevCoarseInput] = scale_byte(prev.coarse);
  x[kPrevFineInput] = scale_byte(prev.fine);
  x[kCurrentCoarseInput] = current_coarse;
  std::copy(cond.begin(), cond.end(), x.begin() + kFirstCondInput);
  return x;
}

GateInputs gate_preactivations(const CellParams& p, const CellState& h_prev,
                               std::span<const float> x) {
  StepContext ctx = begin_step(p, h_prev, {x.begin(), x.end()});
  for (std::size_t part = 0; part < p.config.parts(); ++part) {
    part_input(p, ctx, part);
  }
  return ctx.gates;
}

StepContext begin_step(const CellParams& p, const CellState& h_prev,
                       std::vector<float> x, std::size_t step) {
  const std::size_t h = p.config.state_size;
  if (h_prev.h.size() != h) throw InputError("state has wrong size");
  if (x.size() != p.config.input_dim()) {
    throw InputError("input vector has " + std::to_string(x.size()) +
                     " values, expected " +
                     std::to_string(p.config.input_dim()));
  }
  StepContext ctx;
  ctx.x = std::move(x);
  ctx.gates.recurrent.assign(3 * h, 0.0f);
  ctx.gates.input.assign(3 * h, 0.0f);
  ctx.state = h_prev;
  ctx.step = step;
  p.recurrent.multiply(h_prev.h, ctx.gates.recurrent);
  ctx.products = 1;
  return ctx;
}

std::vector<double> advance_part(const CellParams& p, StepContext& ctx) {
  check_part(p, ctx);
  const std::size_t part = ctx.next_part;
  const std::size_t ps = p.config.part_size();
  part_input(p, ctx, part);
  part_update(p, ctx, part);
  const InferenceHead& head = p.heads[part];
  std::vector<float> hidden(p.config.hidden_width());
  head.hidden.multiply(std::span<const float>(ctx.state.h).subspan(part * ps, ps),
                       hidden);
  add_bias_relu(hidden, head.hidden_bias);
  std::vector<float> logits(p.config.classes());
  head.logits.multiply(hidden, logits);
  ctx.products += 2;
  ++ctx.next_part;
  return logits_to_probs(logits, head.logits_bias, ctx.step);
}

void set_part_value(const CellParams& p, StepContext& ctx, std::size_t part,
                    unsigned value) {
  if (value >= p.config.classes()) throw InputError("class index out of range");
  if (auto col = p.config.current_input_column(part)) {
    ctx.x[*col] = scale_level(value, static_cast<unsigned>(p.config.classes()));
  }
}

void begin_step_batch(const CellParams& p, std::span<StepContext* const> lanes,
                      std::span<const CellState* const> h_prev) {
  if (lanes.size() != h_prev.size()) throw InputError("lane count mismatch");
  const std::size_t h = p.config.state_size;
  std::vector<std::span<const float>> xs;
  std::vector<std::span<float>> ys;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    StepContext& ctx = *lanes[i];
    if (h_prev[i]->h.size() != h) throw InputError("state has wrong size");
    if (ctx.x.size() != p.config.input_dim()) {
      throw InputError("input vector has wrong size");
    }
    ctx.gates.recurrent.assign(3 * h, 0.0f);
    ctx.gates.input.assign(3 * h, 0.0f);
    ctx.state = *h_prev[i];
    ctx.next_part = 0;
    ctx.products = 1;
    xs.emplace_back(h_prev[i]->h);
    ys.emplace_back(ctx.gates.recurrent);
  }
  p.recurrent.multiply_batch(xs, ys);
}

void advance_part_batch(const CellParams& p,
                        std::span<StepContext* const> lanes,
                        std::span<std::vector<double>> probs_out) {
  if (lanes.size() != probs_out.size()) throw InputError("lane count mismatch");
  if (lanes.empty()) return;
  const std::size_t part = lanes[0]->next_part;
  const std::size_t ps = p.config.part_size();
  for (StepContext* ctx : lanes) {
    check_part(p, *ctx);
    if (ctx->next_part != part) {
      throw InputError("lanes must advance the same part together");
    }
    part_input(p, *ctx, part);
    part_update(p, *ctx, part);
  }
  const InferenceHead& head = p.heads[part];
  const std::size_t n = lanes.size();
  std::vector<std::vector<float>> hidden(
      n, std::vector<float>(p.config.hidden_width()));
  std::vector<std::vector<float>> logits(n,
                                         std::vector<float>(p.config.classes()));
  std::vector<std::span<const float>> xs;
  std::vector<std::span<float>> ys;
  for (std::size_t i = 0; i < n; ++i) {
    xs.push_back(std::span<const float>(lanes[i]->state.h).subspan(part * ps, ps));
    ys.emplace_back(hidden[i]);
  }
  head.hidden.multiply_batch(xs, ys);
  xs.clear();
  ys.clear();
  for (std::size_t i = 0; i < n; ++i) {
    add_bias_relu(hidden[i], head.hidden_bias);
    xs.emplace_back(hidden[i]);
    ys.emplace_back(logits[i]);
  }
  head.logits.multiply_batch(xs, ys);
  for (std::size_t i = 0; i < n; ++i) {
    lanes[i]->products += 2;
    ++lanes[i]->next_part;
    probs_out[i] = logits_to_probs(logits[i], head.logits_bias, lanes[i]->step);
  }
}

std::vector<double> softmax(std::span<const float> logits) {
  if (logits.empty()) throw InputError("softmax of an empty vector");
  const float max = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(static_cast<double>(logits[i]) - static_cast<double>(max));
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::size_t sample_categorical(std::span<const double> probs, float u) {
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cum += probs[k];
    if (probs[k] > 0.0) last = k;
    if (cum > static_cast<double>(u)) return k;
  }
  return last;  // rounding left the total at or below u
}

CoarsePhase coarse_step(const CellParams& p, const CellState& h_prev,
                        SamplePair prev, std::span<const float> cond, Rng& rng,
                        float placeholder, std::size_t step) {
  CoarsePhase phase;
  phase.context =
      begin_step(p, h_prev, make_input(p.config, prev, placeholder, cond), step);
  phase.probs = advance_part(p, phase.context);
  phase.coarse =
      static_cast<std::uint8_t>(sample_categorical(phase.probs, rng.uniform()));
  return phase;
}

FinePhase fine_step(const CellParams& p, CoarsePhase phase, std::uint8_t coarse,
                    Rng& rng) {
  StepContext& ctx = phase.context;
  if (ctx.next_part != 1) throw InputError("fine step needs a coarse phase");
  set_part_value(p, ctx, 0, coarse);
  FinePhase out;
  out.probs = advance_part(p, ctx);
  out.fine =
      static_cast<std::uint8_t>(sample_categorical(out.probs, rng.uniform()));
  out.state = std::move(ctx.state);
  out.products = ctx.products;
  return out;
}

SampleStepResult sample_step(const CellParams& p, const CellState& h_prev,
                             SamplePair prev, std::span<const float> cond,
                             Rng& rng, std::size_t step) {
  CoarsePhase coarse = coarse_step(p, h_prev, prev, cond, rng, 0.0f, step);
  const std::uint8_t c = coarse.coarse;
  FinePhase fine = fine_step(p, std::move(coarse), c, rng);
  return {std::move(fine.state), {c, fine.fine}, fine.products};
}

namespace {

std::span<const float> cond_row(const CellParams& p, const DenseMatrix& cond,
                                std::size_t k) {
  if (p.config.cond_dim == 0) return {};
  return cond.row(k);
}

void check_cond(const CellParams& p, const DenseMatrix& cond, std::size_t rows) {
  if (p.config.cond_dim == 0) return;
  if (cond.cols() != p.config.cond_dim || cond.rows() < rows) {
    throw InputError("conditioning matrix is " + std::to_string(cond.rows()) +
                     "x" + std::to_string(cond.cols()) + ", need at least " +
                     std::to_string(rows) + "x" +
                     std::to_string(p.config.cond_dim));
  }
}

}  // namespace

double sequence_nll(const CellParams& p, std::span<const std::uint16_t> waveform,
                    const DenseMatrix& cond) {
  if (p.config.kind != CellKind::wavernn) {
    throw InputError("sequence_nll scores the plain cell");
  }
  if (waveform.size() < 2) throw InputError("waveform needs at least 2 samples");
  check_cond(p, cond, waveform.size() - 1);
  CellState state = CellState::zeros(p.config.state_size);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < waveform.size(); ++k) {
    const SamplePair prev = SamplePair::from(waveform[k]);
    const SamplePair target = SamplePair::from(waveform[k + 1]);
    StepContext ctx = begin_step(
        p, state, make_input(p.config, prev, 0.0f, cond_row(p, cond, k)), k);
    const auto pc = advance_part(p, ctx);
    set_part_value(p, ctx, 0, target.coarse);
    const auto pf = advance_part(p, ctx);
    total -= std::log(pc[target.coarse]) + std::log(pf[target.fine]);
    state = std::move(ctx.state);
  }
  return total / static_cast<double>(waveform.size() - 1);
}

GenerateResult generate(const CellParams& p, std::size_t n,
                        const DenseMatrix& cond, Rng& rng, SamplePair initial) {
  check_cond(p, cond, n);
  GenerateResult out;
  out.samples.reserve(n);
  CellState state = CellState::zeros(p.config.state_size);
  SamplePair prev = initial;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < n; ++k) {
    auto r = sample_step(p, state, prev, cond_row(p, cond, k), rng, k);
    state = std::move(r.state);
    prev = r.sample;
    out.samples.push_back(prev.value());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  out.samples_per_second = secs > 0.0 ? static_cast<double>(n) / secs : 0.0;
  return out;
}

std::vector<OpShape> sample_op_inventory(const CellConfig& c, bool stacked) {
  c.validate();
  const std::size_t h = c.state_size;
  std::vector<OpShape> ops;
  if (stacked) {
    ops.push_back({"gates", h, 3 * h, 1});
  } else {
    ops.push_back({"gates", h, h, 3});
  }
  ops.push_back({"head_hidden", c.part_size(), c.hidden_width(), c.parts()});
  ops.push_back({"head_logits", c.hidden_width(), c.classes(), c.parts()});
  return ops;
}

}  // namespace wavernn
