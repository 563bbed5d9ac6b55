#pragma once

// The WaveRNN cell: a GRU variant whose state is split into parts, each
// predicting one slice of the output sample through its own softmax head.
//
// For the plain cell the state has two halves. The coarse half predicts the
// high 8 bits c_t; the fine half predicts the low 8 bits f_t and is the only
// part that sees c_t as an input:
//
//   x_t = [c_{t-1}, f_{t-1}, c_t, cond_t]
//   u = sigmoid(R_u h + I*_u x + b_u)
//   r = sigmoid(R_r h + I*_r x + b_r)
//   e = tanh(r o (R_e h) + I*_e x + b_e)
//   h' = u o h + (1 - u) o e
//   P(c_t) = softmax(O2 relu(O1 y_c + o1) + o2),  y_c = coarse half of h'
//   P(f_t) = softmax(O4 relu(O3 y_f + o3) + o4),  y_f = fine half of h'
//
// The fused cell uses the same machinery with eight parts and 16-way heads.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wavernn/kernels.h"
#include "wavernn/matrix.h"
#include "wavernn/rng.h"
#include "wavernn/sparse.h"

namespace wavernn {

enum class CellKind : std::uint32_t { wavernn = 0, fused = 1 };

// Input columns of the plain cell.
inline constexpr std::size_t kPrevCoarseInput = 0;
inline constexpr std::size_t kPrevFineInput = 1;
inline constexpr std::size_t kCurrentCoarseInput = 2;
inline constexpr std::size_t kFirstCondInput = 3;

struct CellConfig {
  CellKind kind = CellKind::wavernn;
  std::size_t state_size = 0;
  std::size_t cond_dim = 0;    // conditioning columns (plain cell only)
  std::size_t proj_width = 0;  // head hidden width; 0 means the part width

  static CellConfig wavernn(std::size_t state_size, std::size_t cond_dim = 0) {
    return {CellKind::wavernn, state_size, cond_dim, 0};
  }

  std::size_t parts() const noexcept { return kind == CellKind::fused ? 8 : 2; }
  std::size_t classes() const noexcept {
    return kind == CellKind::fused ? 16 : 256;
  }
  std::size_t parts_per_sample() const noexcept {
    return kind == CellKind::fused ? 4 : 2;
  }
  std::size_t part_size() const noexcept { return state_size / parts(); }
  std::size_t hidden_width() const noexcept {
    return proj_width ? proj_width : part_size();
  }
  std::size_t input_dim() const noexcept;

  // Lowest state part that input column `col` feeds. Columns carrying a
  // value sampled earlier in the same step skip the parts that predict it.
  std::size_t first_part_for_input(std::size_t col) const noexcept;
  // Input column that carries the value sampled by `part`, if any.
  std::optional<std::size_t> current_input_column(std::size_t part) const noexcept;

  void validate() const;  // throws InputError

  friend bool operator==(const CellConfig&, const CellConfig&) = default;
};

template <class T>
struct HeadTensors {
  Matrix<T> hidden;       // hidden_width x part_size
  Matrix<T> hidden_bias;  // hidden_width x 1
  Matrix<T> logits;       // classes x hidden_width
  Matrix<T> logits_bias;  // classes x 1

  friend bool operator==(const HeadTensors&, const HeadTensors&) = default;
};

// Every trainable tensor of a cell, all dense. Doubles as the gradient
// container during training.
template <class T>
struct CellTensors {
  Matrix<T> recurrent;  // R = [R_u; R_r; R_e], 3h x h
  Matrix<T> input;      // I* = [I_u; I_r; I_e], 3h x input_dim
  Matrix<T> gate_bias;  // 3h x 1
  std::vector<HeadTensors<T>> heads;

  static CellTensors zeros(const CellConfig& config);

  template <class F>
  void for_each(F&& f) {
    f(std::string("recurrent"), recurrent);
    f(std::string("input"), input);
    f(std::string("gate_bias"), gate_bias);
    for (std::size_t p = 0; p < heads.size(); ++p) {
      const std::string prefix = "head" + std::to_string(p) + ".";
      f(prefix + "hidden", heads[p].hidden);
      f(prefix + "hidden_bias", heads[p].hidden_bias);
      f(prefix + "logits", heads[p].logits);
      f(prefix + "logits_bias", heads[p].logits_bias);
    }
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<CellTensors*>(this)->for_each(
        [&](const std::string& name, Matrix<T>& m) {
          f(name, static_cast<const Matrix<T>&>(m));
        });
  }

  template <class U>
  CellTensors<U> cast() const {
    CellTensors<U> out;
    out.recurrent = recurrent.template cast<U>();
    out.input = input.template cast<U>();
    out.gate_bias = gate_bias.template cast<U>();
    for (const auto& h : heads) {
      out.heads.push_back({h.hidden.template cast<U>(),
                           h.hidden_bias.template cast<U>(),
                           h.logits.template cast<U>(),
                           h.logits_bias.template cast<U>()});
    }
    return out;
  }

  friend bool operator==(const CellTensors&, const CellTensors&) = default;
};

// Zeroes the input weights that would let a part see a value sampled
// later in the same step.
template <class T>
void apply_input_mask(const CellConfig& config, Matrix<T>& input) {
  const std::size_t h = config.state_size;
  const std::size_t ps = config.part_size();
  for (std::size_t r = 0; r < input.rows(); ++r) {
    const std::size_t part = (r % h) / ps;
    for (std::size_t c = 0; c < input.cols(); ++c) {
      if (part < config.first_part_for_input(c)) input(r, c) = T{0};
    }
  }
}

// Uniform Glorot initialization of all weight matrices, zero biases, input
// mask applied.
CellTensors<float> random_tensors(const CellConfig& config, Rng& rng,
                                  float gain = 1.0f);

// Pruning masks of the sparsifiable matrices: the three gate blocks of R
// and both matrices of every head.
struct CellMasks {
  std::vector<SparsityMask> gates;   // R_u, R_r, R_e (h x h each)
  std::vector<SparsityMask> hidden;  // per head
  std::vector<SparsityMask> logits;  // per head

  static CellMasks dense(const CellConfig& config, BlockShape block);

  SparsityMask stacked_gates() const;
  BlockShape block_shape() const { return gates.at(0).block_shape(); }

  template <class T>
  void apply(CellTensors<T>& t) const {
    const std::size_t h = gates.at(0).n_rows();
    for (std::size_t g = 0; g < gates.size(); ++g) {
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < h; ++c) {
          if (!gates[g].retains(r, c)) t.recurrent(g * h + r, c) = T{0};
        }
      }
    }
    for (std::size_t p = 0; p < t.heads.size(); ++p) {
      hidden.at(p).apply(t.heads[p].hidden);
      logits.at(p).apply(t.heads[p].logits);
    }
  }

  friend bool operator==(const CellMasks&, const CellMasks&) = default;
};

struct InferenceHead {
  WeightMatrix hidden;
  std::vector<float> hidden_bias;
  WeightMatrix logits;
  std::vector<float> logits_bias;
};

// Inference-time parameters. Large matrices are either 32-bit dense or
// 16-bit block-sparse; the input matrix and biases are always dense.
struct CellParams {
  CellConfig config;
  WeightMatrix recurrent;
  DenseMatrix input;
  std::vector<float> gate_bias;
  std::vector<InferenceHead> heads;

  static CellParams zeros(const CellConfig& config);
  // With `masks`, R and the head matrices are compressed to block-sparse
  // 16-bit storage.
  static CellParams from_tensors(const CellConfig& config,
                                 const CellTensors<float>& tensors,
                                 const CellMasks* masks = nullptr);
  CellTensors<float> tensors() const;

  // Shapes, finiteness and the input mask invariant. Throws InputError.
  void validate() const;
};

struct CellState {
  std::vector<float> h;

  static CellState zeros(std::size_t state_size) {
    return {std::vector<float>(state_size, 0.0f)};
  }
  std::span<const float> coarse() const {
    return std::span<const float>(h).first(h.size() / 2);
  }
  std::span<const float> fine() const {
    return std::span<const float>(h).last(h.size() / 2);
  }

  friend bool operator==(const CellState&, const CellState&) = default;
};

struct SamplePair {
  std::uint8_t coarse = 0;
  std::uint8_t fine = 0;

  constexpr std::uint16_t value() const noexcept {
    return static_cast<std::uint16_t>(coarse * 256u + fine);
  }
  static constexpr SamplePair from(std::uint16_t u) noexcept {
    return {static_cast<std::uint8_t>(u >> 8), static_cast<std::uint8_t>(u & 0xffu)};
  }
  friend constexpr bool operator==(SamplePair, SamplePair) = default;
};

// Starting input of a generation: the midpoint sample 32768.
inline constexpr SamplePair kMidpointSample{128, 0};

// Maps v in [0, 255] to 2v/255 - 1.
constexpr float scale_byte(unsigned v) {
  return 2.0f * static_cast<float>(v) / 255.0f - 1.0f;
}
// Maps v in [0, levels) to [-1, 1].
constexpr float scale_level(unsigned v, unsigned levels) {
  return 2.0f * static_cast<float>(v) / static_cast<float>(levels - 1) - 1.0f;
}

struct EncodedSample {
  SamplePair pair;
  float coarse_scaled = 0.0f;
  float fine_scaled = 0.0f;
};

// Throws InputError unless 0 <= u <= 65535.
EncodedSample encode_sample(long u);
std::uint16_t decode_sample(SamplePair pair);

// R h and I* x + b for every row, kept separate because the candidate
// gate multiplies only the recurrent part by r.
struct GateInputs {
  std::vector<float> recurrent;
  std::vector<float> input;

  float preactivation(std::size_t gate, std::size_t i) const {
    const std::size_t h = recurrent.size() / 3;
    return recurrent[gate * h + i] + input[gate * h + i];
  }
};

GateInputs gate_preactivations(const CellParams& p, const CellState& h_prev,
                               std::span<const float> x);

// One step in flight. Parts are resolved in order; resolving a part
// updates its slice of the state and produces its output distribution.
struct StepContext {
  std::vector<float> x;  // current-value columns filled in as parts resolve
  GateInputs gates;      // input rows are filled per part
  CellState state;       // parts < next_part hold the new state
  std::size_t next_part = 0;
  std::size_t products = 0;  // large matrix-vector products so far
  std::size_t step = 0;      // position, for error reporting
};

// Builds the input vector of the plain cell.
std::vector<float> make_input(const CellConfig& config, SamplePair prev,
                              float current_coarse,
                              std::span<const float> cond);

// Computes R h_prev: one product on the stacked matrix.
StepContext begin_step(const CellParams& p, const CellState& h_prev,
                       std::vector<float> x, std::size_t step = 0);
// Resolves the next part and returns its class distribution. Throws
// NumericError when logits are not finite.
std::vector<double> advance_part(const CellParams& p, StepContext& ctx);
// Records the value sampled for `part` in the input vector.
void set_part_value(const CellParams& p, StepContext& ctx, std::size_t part,
                    unsigned value);

// Lock-step variants for several lanes; products are batched and results
// are bit-identical to the single-lane functions.
void begin_step_batch(const CellParams& p, std::span<StepContext* const> lanes,
                      std::span<const CellState* const> h_prev);
void advance_part_batch(const CellParams& p,
                        std::span<StepContext* const> lanes,
                        std::span<std::vector<double>> probs_out);

// Numerically stable softmax evaluated in double precision.
std::vector<double> softmax(std::span<const float> logits);
// Inverse CDF: smallest k with cumulative probability > u.
std::size_t sample_categorical(std::span<const double> probs, float u);

struct CoarsePhase {
  StepContext context;  // coarse half updated, fine half still h_{t-1}
  std::vector<double> probs;
  std::uint8_t coarse = 0;
};

struct FinePhase {
  std::uint8_t fine = 0;
  std::vector<double> probs;
  CellState state;
  std::size_t products = 0;
};

// `placeholder` stands in for the unknown c_t; the input mask makes the
// result independent of it.
CoarsePhase coarse_step(const CellParams& p, const CellState& h_prev,
                        SamplePair prev, std::span<const float> cond, Rng& rng,
                        float placeholder = 0.0f, std::size_t step = 0);
FinePhase fine_step(const CellParams& p, CoarsePhase phase, std::uint8_t coarse,
                    Rng& rng);

struct SampleStepResult {
  CellState state;
  SamplePair sample;
  std::size_t products = 0;
};

SampleStepResult sample_step(const CellParams& p, const CellState& h_prev,
                             SamplePair prev, std::span<const float> cond,
                             Rng& rng, std::size_t step = 0);

// Teacher-forced negative log-likelihood (nats per sample) of waveform[1..]
// given waveform[0], starting from the zero state. Row k of `cond` is used
// for the prediction of waveform[k + 1].
double sequence_nll(const CellParams& p, std::span<const std::uint16_t> waveform,
                    const DenseMatrix& cond = {});

struct GenerateResult {
  std::vector<std::uint16_t> samples;
  double samples_per_second = 0.0;
};

// Autoregressive rollout of n samples after `initial`. Row k of `cond`
// conditions the k-th generated sample.
GenerateResult generate(const CellParams& p, std::size_t n,
                        const DenseMatrix& cond, Rng& rng,
                        SamplePair initial = kMidpointSample);

struct OpShape {
  std::string name;
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::size_t count = 0;
};

// Large matrix-vector products per sample. With `stacked` the three gate
// products are one 3h x h product.
std::vector<OpShape> sample_op_inventory(const CellConfig& config,
                                         bool stacked = true);

}  // namespace wavernn
