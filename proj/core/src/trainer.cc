#include "wavernn/trainer.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wavernn/errors.h"

namespace wavernn {

namespace {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<const RowMat<T>> view(const Matrix<T>& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

template <class T>
Eigen::Map<RowMat<T>> view(Matrix<T>& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

template <class T>
auto sigmoid(const Eigen::ArrayBase<T>& a) {
  using S = typename T::Scalar;
  return S(1) / (S(1) + (-a).exp());
}

void check_batch(const CellConfig& c, const SequenceBatch& b) {
  if (b.input_dim != c.input_dim() || b.parts != c.parts()) {
    throw InputError("batch layout does not match the cell");
  }
  if (b.sequences == 0 || b.steps == 0) throw InputError("empty batch");
  if (b.inputs.size() != b.sequences * b.steps * b.input_dim ||
      b.targets.size() != b.sequences * b.steps * b.parts) {
    throw InputError("batch buffers have inconsistent sizes");
  }
}

template <class T>
LossAndGradients<T> run(const CellConfig& c, const CellTensors<T>& params,
                        const SequenceBatch& batch, std::size_t batch_index,
                        bool backward) {
  c.validate();
  check_batch(c, batch);
  const Eigen::Index h = static_cast<Eigen::Index>(c.state_size);
  const Eigen::Index in = static_cast<Eigen::Index>(c.input_dim());
  const Eigen::Index N = static_cast<Eigen::Index>(batch.sequences);
  const Eigen::Index L = static_cast<Eigen::Index>(batch.steps);
  const Eigen::Index M = N * L;
  const Eigen::Index ps = static_cast<Eigen::Index>(c.part_size());
  const Eigen::Index K = static_cast<Eigen::Index>(c.classes());

  const std::size_t targets = batch.target_count();
  if (targets == 0) throw InputError("batch has no targets");
  const double normalizer =
      static_cast<double>(targets) / static_cast<double>(c.parts_per_sample());

  Mat<T> X(in, M);
  for (Eigen::Index m = 0; m < M; ++m) {
    for (Eigen::Index col = 0; col < in; ++col) {
      X(col, m) = static_cast<T>(
          batch.inputs[static_cast<std::size_t>(m * in + col)]);
    }
  }
  Matrix<T> masked_input = params.input;
  apply_input_mask(c, masked_input);
  const Mat<T> I = view(masked_input);
  const Mat<T> R = view(params.recurrent);
  const Mat<T> b = view(params.gate_bias);

  Mat<T> AI = I * X;
  AI.colwise() += b.col(0);

  Mat<T> Hs = Mat<T>::Zero(h, (L + 1) * N);
  Mat<T> U(h, M), G(h, M), E(h, M), ARe(h, M);
  Mat<T> AR(3 * h, N);
  for (Eigen::Index t = 0; t < L; ++t) {
    const Eigen::Index c0 = t * N;
    AR.noalias() = R * Hs.middleCols(c0, N);
    U.middleCols(c0, N) =
        sigmoid((AR.topRows(h) + AI.block(0, c0, h, N)).array()).matrix();
    G.middleCols(c0, N) =
        sigmoid((AR.middleRows(h, h) + AI.block(h, c0, h, N)).array()).matrix();
    ARe.middleCols(c0, N) = AR.bottomRows(h);
    E.middleCols(c0, N) =
        (G.middleCols(c0, N).array() * AR.bottomRows(h).array() +
         AI.block(2 * h, c0, h, N).array())
            .tanh()
            .matrix();
    Hs.middleCols(c0 + N, N) =
        (U.middleCols(c0, N).array() * Hs.middleCols(c0, N).array() +
         (T(1) - U.middleCols(c0, N).array()) * E.middleCols(c0, N).array())
            .matrix();
  }

  LossAndGradients<T> out;
  if (backward) out.gradients = CellTensors<T>::zeros(c);
  Mat<T> dH = backward ? Mat<T>::Zero(h, M) : Mat<T>();
  double total = 0.0;
  const auto Hnew = Hs.rightCols(M);

  for (std::size_t p = 0; p < c.parts(); ++p) {
    const auto& head = params.heads[p];
    const Mat<T> W1 = view(head.hidden);
    const Mat<T> W2 = view(head.logits);
    const Mat<T> Y = Hnew.middleRows(static_cast<Eigen::Index>(p) * ps, ps);
    Mat<T> Z1 = W1 * Y;
    Z1.colwise() += view(head.hidden_bias).col(0);
    const Mat<T> A1 = Z1.cwiseMax(T(0));
    Mat<T> Lg = W2 * A1;
    Lg.colwise() += view(head.logits_bias).col(0);

    Mat<T> dLg;
    if (backward) dLg = Mat<T>::Zero(K, M);
    for (Eigen::Index m = 0; m < M; ++m) {
      const std::size_t step = static_cast<std::size_t>(m / N);
      const std::size_t seq = static_cast<std::size_t>(m % N);
      const std::int32_t target = batch.target(step, seq, p);
      if (target < 0) continue;
      if (target >= K) throw InputError("target class out of range");
      const T max = Lg.col(m).maxCoeff();
      const auto shifted = (Lg.col(m).array() - max).exp();
      const T z = shifted.sum();
      total += static_cast<double>(std::log(z) + max - Lg(target, m));
      if (backward) {
        dLg.col(m) = (shifted / z).matrix() / static_cast<T>(normalizer);
        dLg(target, m) -= static_cast<T>(1.0 / normalizer);
      }
    }
    if (!backward) continue;
    auto& g = out.gradients.heads[p];
    view(g.logits).noalias() = dLg * A1.transpose();
    view(g.logits_bias) = dLg.rowwise().sum();
    Mat<T> dZ1 = W2.transpose() * dLg;
    dZ1 = (Z1.array() > T(0)).select(dZ1, T(0));
    view(g.hidden).noalias() = dZ1 * Y.transpose();
    view(g.hidden_bias) = dZ1.rowwise().sum();
    dH.middleRows(static_cast<Eigen::Index>(p) * ps, ps).noalias() =
        W1.transpose() * dZ1;
  }

  out.loss = total / normalizer;
  if (!std::isfinite(out.loss)) {
    throw NumericError("non-finite loss in batch " + std::to_string(batch_index),
                       batch_index);
  }
  if (!backward) return out;

  Mat<T> dAR(3 * h, M), dAI(3 * h, M);
  Mat<T> dh_next = Mat<T>::Zero(h, N);
  Mat<T> dh(h, N);
  for (Eigen::Index t = L - 1; t >= 0; --t) {
    const Eigen::Index c0 = t * N;
    dh = dH.middleCols(c0, N) + dh_next;
    const auto u = U.middleCols(c0, N).array();
    const auto g = G.middleCols(c0, N).array();
    const auto e = E.middleCols(c0, N).array();
    const auto hp = Hs.middleCols(c0, N).array();
    const auto d = dh.array();
    const auto dae = (d * (T(1) - u) * (T(1) - e * e)).eval();
    const auto dau = (d * (hp - e) * u * (T(1) - u)).eval();
    const auto dag = (dae * ARe.middleCols(c0, N).array() * g * (T(1) - g)).eval();
    dAI.block(0, c0, h, N) = dau.matrix();
    dAI.block(h, c0, h, N) = dag.matrix();
    dAI.block(2 * h, c0, h, N) = dae.matrix();
    dAR.block(0, c0, 2 * h, N) = dAI.block(0, c0, 2 * h, N);
    dAR.block(2 * h, c0, h, N) = (dae * g).matrix();
    dh_next.noalias() = R.transpose() * dAR.middleCols(c0, N);
    dh_next.array() += d * u;
  }
  view(out.gradients.recurrent).noalias() = dAR * Hs.leftCols(M).transpose();
  view(out.gradients.input).noalias() = dAI * X.transpose();
  apply_input_mask(c, out.gradients.input);
  view(out.gradients.gate_bias) = dAI.rowwise().sum();
  return out;
}

template <class T>
std::vector<Matrix<T>*> tensor_list(CellTensors<T>& t) {
  std::vector<Matrix<T>*> out;
  t.for_each([&](const std::string&, Matrix<T>& m) { out.push_back(&m); });
  return out;
}

std::size_t floor_count(double z, std::size_t count) {
  return static_cast<std::size_t>(
      std::floor(z * static_cast<double>(count) + 1e-9));
}

DenseMatrix gate_block(const DenseMatrix& recurrent, std::size_t g) {
  const std::size_t h = recurrent.cols();
  DenseMatrix out(h, h);
  std::copy_n(recurrent.data() + g * h * h, h * h, out.data());
  return out;
}

std::vector<std::size_t> block_histogram(const DenseMatrix& m, BlockShape s) {
  std::vector<std::size_t> hist(s.size() + 1, 0);
  for (std::size_t br = 0; br < m.rows() / s.rows; ++br) {
    for (std::size_t bc = 0; bc < m.cols() / s.cols; ++bc) {
      std::size_t nz = 0;
      for (std::size_t r = 0; r < s.rows; ++r) {
        for (std::size_t col = 0; col < s.cols; ++col) {
          nz += m(br * s.rows + r, bc * s.cols + col) != 0.0f;
        }
      }
      ++hist[nz];
    }
  }
  return hist;
}

double prunable_sparsity(const CellMasks& masks) {
  std::size_t total = 0, kept = 0;
  auto add = [&](const SparsityMask& m) {
    total += m.weight_count();
    kept += m.retained_weights();
  };
  for (const auto& m : masks.gates) add(m);
  for (const auto& m : masks.hidden) add(m);
  for (const auto& m : masks.logits) add(m);
  return total ? 1.0 - static_cast<double>(kept) / static_cast<double>(total)
               : 0.0;
}

}  // namespace

SequenceBatch::SequenceBatch(std::size_t sequences, std::size_t steps,
                             std::size_t input_dim, std::size_t parts)
    : sequences(sequences),
      steps(steps),
      input_dim(input_dim),
      parts(parts),
      inputs(sequences * steps * input_dim, 0.0f),
      targets(sequences * steps * parts, -1) {}

std::size_t SequenceBatch::target_count() const {
  return static_cast<std::size_t>(
      std::count_if(targets.begin(), targets.end(),
                    [](std::int32_t t) { return t >= 0; }));
}

SequenceBatch make_sequence_batch(
    const CellConfig& c, std::span<const std::span<const std::uint16_t>> segments,
    std::span<const DenseMatrix> conds) {
  c.validate();
  if (c.kind != CellKind::wavernn) {
    throw InputError("make_sequence_batch builds plain-cell batches");
  }
  if (segments.empty()) throw InputError("no segments");
  const std::size_t len = segments[0].size();
  if (len < 2) throw InputError("segments need at least 2 samples");
  if (c.cond_dim > 0 && conds.size() != segments.size()) {
    throw InputError("one conditioning matrix per segment is required");
  }
  SequenceBatch b(segments.size(), len - 1, c.input_dim(), c.parts());
  for (std::size_t n = 0; n < segments.size(); ++n) {
    const auto seg = segments[n];
    if (seg.size() != len) throw InputError("segments must have equal length");
    if (c.cond_dim > 0 &&
        (conds[n].cols() != c.cond_dim || conds[n].rows() < len - 1)) {
      throw InputError("conditioning matrix too small for its segment");
    }
    for (std::size_t k = 0; k + 1 < len; ++k) {
      const SamplePair prev = SamplePair::from(seg[k]);
      const SamplePair cur = SamplePair::from(seg[k + 1]);
      b.input(k, n, kPrevCoarseInput) = scale_byte(prev.coarse);
      b.input(k, n, kPrevFineInput) = scale_byte(prev.fine);
      b.input(k, n, kCurrentCoarseInput) = scale_byte(cur.coarse);
      for (std::size_t j = 0; j < c.cond_dim; ++j) {
        b.input(k, n, kFirstCondInput + j) = conds[n](k, j);
      }
      b.target(k, n, 0) = cur.coarse;
      b.target(k, n, 1) = cur.fine;
    }
  }
  return b;
}

template <class T>
LossAndGradients<T> forward_backward(const CellConfig& c,
                                     const CellTensors<T>& params,
                                     const SequenceBatch& batch,
                                     std::size_t batch_index) {
  return run(c, params, batch, batch_index, true);
}

template <class T>
double forward_loss(const CellConfig& c, const CellTensors<T>& params,
                    const SequenceBatch& batch) {
  return run(c, params, batch, 0, false).loss;
}

template LossAndGradients<float> forward_backward(const CellConfig&,
                                                  const CellTensors<float>&,
                                                  const SequenceBatch&,
                                                  std::size_t);
template LossAndGradients<double> forward_backward(const CellConfig&,
                                                   const CellTensors<double>&,
                                                   const SequenceBatch&,
                                                   std::size_t);
template double forward_loss(const CellConfig&, const CellTensors<float>&,
                             const SequenceBatch&);
template double forward_loss(const CellConfig&, const CellTensors<double>&,
                             const SequenceBatch&);

Optimizer::Optimizer(const CellConfig& config, OptimizerConfig options)
    : config_(config),
      options_(options),
      m_(CellTensors<float>::zeros(config)),
      v_(CellTensors<float>::zeros(config)) {
  if (!(options.learning_rate > 0.0)) {
    throw InputError("learning rate must be positive");
  }
}

void Optimizer::update(CellTensors<float>& params,
                       const CellTensors<float>& grads, const CellMasks* masks) {
  auto p = tensor_list(params);
  auto g = tensor_list(const_cast<CellTensors<float>&>(grads));
  auto m = tensor_list(m_);
  auto v = tensor_list(v_);
  if (p.size() != g.size()) throw InputError("gradient set does not match");
  ++step_;

  double scale = 1.0;
  if (options_.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto* t : g) {
      for (float x : t->values()) sq += static_cast<double>(x) * x;
    }
    const double norm = std::sqrt(sq);
    if (norm > options_.clip_norm) scale = options_.clip_norm / norm;
  }

  const double lr = options_.learning_rate;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]->size() != g[i]->size()) {
      throw InputError("gradient shape does not match its parameter");
    }
    auto pv = p[i]->values();
    auto gv = g[i]->values();
    if (options_.kind == OptimizerKind::sgd) {
      for (std::size_t k = 0; k < pv.size(); ++k) {
        pv[k] -= static_cast<float>(lr * scale * gv[k]);
      }
      continue;
    }
    auto mv = m[i]->values();
    auto vv = v[i]->values();
    for (std::size_t k = 0; k < pv.size(); ++k) {
      const double gk = scale * gv[k];
      const double mk = b1 * mv[k] + (1.0 - b1) * gk;
      const double vk = b2 * vv[k] + (1.0 - b2) * gk * gk;
      mv[k] = static_cast<float>(mk);
      vv[k] = static_cast<float>(vk);
      pv[k] -= static_cast<float>(lr * (mk / c1) /
                                  (std::sqrt(vk / c2) + options_.epsilon));
    }
  }
  apply_input_mask(config_, params.input);
  if (masks) masks->apply(params);
}

void PruneSchedule::validate() const {
  if (!(target >= 0.0 && target < 1.0)) {
    throw InputError("target sparsity must be in [0, 1)");
  }
  if (start < 0 || duration <= 0 || cadence <= 0) {
    throw InputError("prune schedule needs start >= 0, duration > 0, cadence > 0");
  }
  if (!block.supported()) throw InputError("unsupported block shape");
}

double prune_fraction(long t, const PruneSchedule& s) {
  if (t <= s.start) return 0.0;
  if (t >= s.start + s.duration) return s.target;
  const double x = 1.0 - static_cast<double>(t - s.start) /
                             static_cast<double>(s.duration);
  return s.target * (1.0 - x * x * x);
}

SparsityMask update_mask(const DenseMatrix& w, BlockShape block, double z,
                         const SparsityMask* previous) {
  if (!(z >= 0.0 && z < 1.0)) throw InputError("prune fraction must be in [0, 1)");
  SparsityMask mask(w.rows(), w.cols(), block, true);
  if (previous && (previous->n_rows() != w.rows() ||
                   previous->n_cols() != w.cols() ||
                   previous->block_shape() != block)) {
    throw InputError("previous mask does not match the weights");
  }
  const std::size_t count = mask.block_count();
  const std::size_t k = floor_count(z, count);
  if (k == 0) return mask;
  std::vector<double> mean(count, 0.0);
  const std::size_t bcols = mask.block_cols();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t br = i / bcols, bc = i % bcols;
    double s = 0.0;
    for (std::size_t r = 0; r < block.rows; ++r) {
      for (std::size_t c = 0; c < block.cols; ++c) {
        s += std::fabs(static_cast<double>(w(br * block.rows + r, bc * block.cols + c)));
      }
    }
    mean[i] = s / static_cast<double>(block.size());
  }
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  auto was_pruned = [&](std::size_t i) { return previous && !previous->bit(i); };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (mean[a] != mean[b]) return mean[a] < mean[b];
    if (was_pruned(a) != was_pruned(b)) return was_pruned(a);
    return a < b;
  });
  for (std::size_t i = 0; i < k; ++i) mask.set_bit(order[i], false);
  return mask;
}

CellMasks update_cell_masks(const CellConfig& c, const CellTensors<float>& t,
                            BlockShape block, double z,
                            const CellMasks* previous) {
  auto prev = [&](const std::vector<SparsityMask>* v,
                  std::size_t i) -> const SparsityMask* {
    if (!previous || !v || i >= v->size()) return nullptr;
    const auto& m = (*v)[i];
    return m.block_shape() == block ? &m : nullptr;
  };
  CellMasks out;
  for (std::size_t g = 0; g < 3; ++g) {
    out.gates.push_back(update_mask(gate_block(t.recurrent, g), block, z,
                                    prev(previous ? &previous->gates : nullptr, g)));
  }
  for (std::size_t p = 0; p < c.parts(); ++p) {
    out.hidden.push_back(update_mask(t.heads[p].hidden, block, z,
                                     prev(previous ? &previous->hidden : nullptr, p)));
    out.logits.push_back(update_mask(t.heads[p].logits, block, z,
                                     prev(previous ? &previous->logits : nullptr, p)));
  }
  return out;
}

SparsityReport sparsity_report(const CellConfig& c, const CellTensors<float>& t,
                               const CellMasks* masks) {
  SparsityReport report;
  auto add = [&](const std::string& name, const DenseMatrix& m,
                 const SparsityMask* mask) {
    MatrixSparsity s;
    s.name = name;
    s.rows = m.rows();
    s.cols = m.cols();
    s.weights = m.size();
    s.prunable = mask != nullptr;
    s.nonzero = mask ? mask->retained_weights() : m.size();
    s.sparsity = 1.0 - static_cast<double>(s.nonzero) / static_cast<double>(s.weights);
    s.block_histogram = block_histogram(m, mask ? mask->block_shape() : kBlock1x1);
    report.total_parameters += s.weights;
    report.total_nonzero += s.nonzero;
    report.matrices.push_back(std::move(s));
  };
  static const char* kGate[] = {"recurrent.u", "recurrent.r", "recurrent.e"};
  for (std::size_t g = 0; g < 3; ++g) {
    add(kGate[g], gate_block(t.recurrent, g), masks ? &masks->gates[g] : nullptr);
  }
  add("input", t.input, nullptr);
  add("gate_bias", t.gate_bias, nullptr);
  for (std::size_t p = 0; p < c.parts(); ++p) {
    const std::string prefix = "head" + std::to_string(p) + ".";
    add(prefix + "hidden", t.heads[p].hidden, masks ? &masks->hidden[p] : nullptr);
    add(prefix + "hidden_bias", t.heads[p].hidden_bias, nullptr);
    add(prefix + "logits", t.heads[p].logits, masks ? &masks->logits[p] : nullptr);
    add(prefix + "logits_bias", t.heads[p].logits_bias, nullptr);
  }
  report.prunable_sparsity = masks ? prunable_sparsity(*masks) : 0.0;
  return report;
}

std::size_t dense_parameter_count(const CellConfig& c) {
  c.validate();
  const std::size_t h = c.state_size;
  const std::size_t hw = c.hidden_width();
  return 3 * h * h + 3 * h * c.input_dim() + 3 * h +
         c.parts() * (hw * c.part_size() + hw + c.classes() * hw + c.classes());
}

std::size_t matched_dense_state_size(std::size_t budget, std::size_t cond_dim) {
  std::size_t best = 2;
  std::size_t best_diff = static_cast<std::size_t>(-1);
  for (std::size_t h = 2;; h += 2) {
    const std::size_t n = dense_parameter_count(CellConfig::wavernn(h, cond_dim));
    const std::size_t diff = n > budget ? n - budget : budget - n;
    if (diff < best_diff) {
      best = h;
      best_diff = diff;
    }
    if (n > budget) break;
  }
  return best;
}

BatchSource random_segment_source(
    const CellConfig& c,
    std::shared_ptr<const std::vector<std::vector<std::uint16_t>>> corpus,
    std::size_t sequence_length, std::size_t batch_size) {
  if (c.kind != CellKind::wavernn || c.cond_dim != 0) {
    throw InputError("random segments feed an unconditioned plain cell");
  }
  if (!corpus || corpus->empty()) throw InputError("corpus is empty");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus->size(); ++i) {
    if ((*corpus)[i].size() >= sequence_length + 1) usable.push_back(i);
  }
  if (usable.empty()) {
    throw InputError("no corpus waveform holds " +
                     std::to_string(sequence_length + 1) + " samples");
  }
  return [c, corpus, usable, sequence_length, batch_size](std::size_t, Rng& rng) {
    std::vector<std::span<const std::uint16_t>> segs;
    for (std::size_t n = 0; n < batch_size; ++n) {
      const auto& w = (*corpus)[usable[rng.below(usable.size())]];
      const std::size_t offset = rng.below(w.size() - sequence_length);
      segs.emplace_back(w.data() + offset, sequence_length + 1);
    }
    return make_sequence_batch(c, segs);
  };
}

void TrainConfig::validate() const {
  if (sequence_length < 2) throw InputError("sequence_length must be >= 2");
  if (batch_size == 0) throw InputError("batch_size must be positive");
  if (prune) prune->validate();
}

TrainState train(const CellConfig& c, const TrainConfig& options,
                 const BatchSource& batches, const TrainHooks& hooks,
                 const CellTensors<float>* initial) {
  c.validate();
  options.validate();
  Rng rng(options.seed);
  TrainState state;
  state.params = initial ? *initial : random_tensors(c, rng, options.init_gain);
  apply_input_mask(c, state.params.input);
  state.masks = CellMasks::dense(c, options.prune ? options.prune->block : kBlock1x1);
  Optimizer optimizer(c, options.optimizer);
  Rng data = Rng::substream(options.seed, 1);
  double sparsity = 0.0;
  for (std::size_t step = 1; step <= options.steps; ++step) {
    if (options.prune) {
      const auto& s = *options.prune;
      const long t = static_cast<long>(step);
      const bool on_cadence = t >= s.start && (t - s.start) % s.cadence == 0;
      if (on_cadence || t == s.start + s.duration) {
        state.masks = update_cell_masks(c, state.params, s.block,
                                        prune_fraction(t, s), &state.masks);
        state.masks.apply(state.params);
        sparsity = prunable_sparsity(state.masks);
      }
    }
    const SequenceBatch batch = batches(step, data);
    LossAndGradients<float> fb;
    try {
      fb = forward_backward(c, state.params, batch, step);
      for (const auto* m : tensor_list(fb.gradients)) {
        if (!m->all_finite()) {
          throw NumericError("non-finite gradient at step " + std::to_string(step),
                             step);
        }
      }
    } catch (const NumericError&) {
      if (hooks.on_abort) hooks.on_abort(state);
      throw;
    }
    optimizer.update(state.params, fb.gradients,
                     options.prune ? &state.masks : nullptr);
    TrainRecord record{step, fb.loss, sparsity};
    state.history.push_back(record);
    if (hooks.on_step) hooks.on_step(record);
  }
  return state;
}

CellParams export_params(const CellConfig& c, const TrainState& state,
                         bool sparse) {
  return CellParams::from_tensors(c, state.params, sparse ? &state.masks : nullptr);
}

}  // namespace wavernn
