#include "oracles.h"

#include <algorithm>
#include <bit>
#include <cmath>

namespace oracle {

std::vector<double> matvec(const wavernn::DenseMatrix& m,
                           std::span<const float> x) {
  std::vector<double> y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      y[i] += static_cast<double>(m(i, j)) * static_cast<double>(x[j]);
    }
  }
  return y;
}

std::vector<double> softmax(std::span<const double> logits) {
  double max = logits[0];
  for (double v : logits) max = std::max(max, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - max);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

float round_half(float v) {
  if (!std::isfinite(v)) return v;
  const double a = std::fabs(static_cast<double>(v));
  if (a == 0.0) return v;
  // Quantum of the binary16 grid around a.
  int e = static_cast<int>(std::floor(std::log2(a)));
  e = std::max(e, -14);
  const double quantum = std::ldexp(1.0, e - 10);
  double q = a / quantum;
  double fl = std::floor(q);
  const double frac = q - fl;
  if (frac > 0.5 || (frac == 0.5 && std::fmod(fl, 2.0) != 0.0)) fl += 1.0;
  double r = fl * quantum;
  if (r >= 65520.0) r = INFINITY;
  return static_cast<float>(v < 0 ? -r : r);
}

CellOutput cell_step(const wavernn::CellConfig& c,
                     const wavernn::CellTensors<float>& t,
                     std::span<const double> h_prev, std::span<const float> x) {
  const std::size_t h = c.state_size;
  const std::size_t ps = c.part_size();
  auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  auto gate_row = [&](std::size_t g, std::size_t i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      acc += static_cast<double>(t.recurrent(g * h + i, j)) * h_prev[j];
    }
    return acc;
  };
  auto input_row = [&](std::size_t g, std::size_t i) {
    const std::size_t part = i / ps;
    double acc = t.gate_bias(g * h + i, 0);
    for (std::size_t col = 0; col < x.size(); ++col) {
      bool masked = false;
      if (c.kind == wavernn::CellKind::wavernn) {
        masked = col == 2 && part == 0;
      } else {
        masked = col >= 8 && part <= col - 8;
      }
      if (!masked) acc += static_cast<double>(t.input(g * h + i, col)) * x[col];
    }
    return acc;
  };
  CellOutput out;
  out.state.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    const double u = sig(gate_row(0, i) + input_row(0, i));
    const double r = sig(gate_row(1, i) + input_row(1, i));
    const double e = std::tanh(r * gate_row(2, i) + input_row(2, i));
    out.state[i] = u * h_prev[i] + (1.0 - u) * e;
  }
  for (std::size_t p = 0; p < c.parts(); ++p) {
    const auto& head = t.heads[p];
    std::vector<double> hidden(head.hidden.rows());
    for (std::size_t k = 0; k < hidden.size(); ++k) {
      double acc = head.hidden_bias(k, 0);
      for (std::size_t j = 0; j < ps; ++j) {
        acc += static_cast<double>(head.hidden(k, j)) * out.state[p * ps + j];
      }
      hidden[k] = std::max(acc, 0.0);
    }
    std::vector<double> logits(head.logits.rows());
    for (std::size_t k = 0; k < logits.size(); ++k) {
      double acc = head.logits_bias(k, 0);
      for (std::size_t j = 0; j < hidden.size(); ++j) {
        acc += static_cast<double>(head.logits(k, j)) * hidden[j];
      }
      logits[k] = acc;
    }
    out.logits.push_back(std::move(logits));
  }
  return out;
}

double sequence_nll(const wavernn::CellConfig& c,
                    const wavernn::CellTensors<float>& t,
                    std::span<const std::uint16_t> w,
                    const wavernn::DenseMatrix& cond) {
  std::vector<double> state(c.state_size, 0.0);
  auto scale = [](unsigned v) { return static_cast<float>(2.0 * v / 255.0 - 1.0); };
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < w.size(); ++k) {
    const unsigned pc = w[k] / 256, pf = w[k] % 256;
    const unsigned tc = w[k + 1] / 256, tf = w[k + 1] % 256;
    std::vector<float> x = {scale(pc), scale(pf), scale(tc)};
    for (std::size_t j = 0; j < c.cond_dim; ++j) x.push_back(cond(k, j));
    auto out = cell_step(c, t, state, x);
    total -= std::log(softmax(out.logits[0])[tc]);
    total -= std::log(softmax(out.logits[1])[tf]);
    state = out.state;
  }
  return total / static_cast<double>(w.size() - 1);
}

}  // namespace oracle

namespace oracle {

std::vector<std::vector<double>> cond_net(const wavernn::CondNet& net,
                                          const wavernn::DenseMatrix& input) {
  const auto& cfg = net.config();
  const std::size_t n = input.rows();
  const std::size_t res = cfg.residual_channels;
  std::vector<std::vector<double>> x(n, std::vector<double>(res, 0.0));
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t co = 0; co < res; ++co) {
      double acc = net.input_bias()(co, 0);
      for (std::size_t c = 0; c < cfg.input_channels; ++c) {
        acc += static_cast<double>(net.input_weights()(c, co)) * input(p, c);
      }
      x[p][co] = acc;
    }
  }
  const auto at = [&](std::size_t p, std::size_t c) {
    return p < n ? x[p][c] : 0.0;
  };
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layers()[l];
    const std::size_t d = cfg.dilations[l];
    std::vector<std::vector<double>> y(n, std::vector<double>(res, 0.0));
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t cc = 0; cc < cfg.conv_channels; ++cc) {
        double h = layer.conv_bias(cc, 0);
        for (std::size_t k = 0; k < cfg.kernel; ++k) {
          for (std::size_t ci = 0; ci < res; ++ci) {
            h += static_cast<double>(layer.conv(k * res + ci, cc)) *
                 at(p + k * d, ci);
          }
        }
        h = std::max(h, 0.0);
        for (std::size_t co = 0; co < res; ++co) {
          y[p][co] += static_cast<double>(layer.out(cc, co)) * h;
        }
      }
      for (std::size_t co = 0; co < res; ++co) {
        y[p][co] += layer.out_bias(co, 0) + x[p][co];
      }
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace oracle
