#include "wavernn/cond_net.h"

#include <cmath>

#include "wavernn/errors.h"

namespace wavernn {

std::size_t CondNetConfig::receptive_field() const {
  std::size_t rf = 0;
  for (std::size_t d : dilations) rf += (kernel - 1) * d;
  return rf;
}

void CondNetConfig::validate() const {
  if (input_channels == 0 || residual_channels == 0 || conv_channels == 0) {
    throw InputError("conditioning net channel counts must be positive");
  }
  if (kernel == 0) throw InputError("conditioning net kernel must be positive");
  for (std::size_t d : dilations) {
    if (d == 0) throw InputError("dilations must be positive");
  }
}

CondNetConfig CondNetConfig::desk(std::size_t batch_factor) {
  CondNetConfig c;
  c.input_channels = 2 * batch_factor;
  return c;
}

CondNetConfig CondNetConfig::large(std::size_t batch_factor) {
  CondNetConfig c;
  c.input_channels = 2 * batch_factor;
  c.residual_channels = 768;
  c.conv_channels = 384;
  c.kernel = 3;
  c.dilations = {1, 2, 4, 8, 16, 1, 2, 4, 8, 16};
  return c;
}

CondNetConfig CondNetConfig::for_horizon(std::size_t batch_factor,
                                         std::size_t horizon,
                                         std::size_t channels) {
  CondNetConfig c;
  c.input_channels = 2 * batch_factor;
  c.residual_channels = channels;
  c.conv_channels = channels;
  c.dilations.clear();
  const std::size_t limit = horizon > 0 ? horizon - 1 : 0;
  c.kernel = limit >= 2 ? 3 : 2;
  std::size_t rf = 0;
  for (std::size_t d = 1; rf + (c.kernel - 1) * d <= limit; d *= 2) {
    c.dilations.push_back(d);
    rf += (c.kernel - 1) * d;
  }
  return c;
}

CondNet::CondNet(CondNetConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t res = config_.residual_channels;
  const std::size_t conv = config_.conv_channels;
  input_ = DenseMatrix(config_.input_channels, res);
  input_bias_ = DenseMatrix(res, 1);
  for (std::size_t i = 0; i < config_.dilations.size(); ++i) {
    layers_.push_back({DenseMatrix(config_.kernel * res, conv), DenseMatrix(conv, 1),
                       DenseMatrix(conv, res), DenseMatrix(res, 1)});
  }
}

CondNet CondNet::random(CondNetConfig config, Rng& rng, float gain) {
  CondNet net(std::move(config));
  auto fill = [&](DenseMatrix& m) {
    const float limit =
        gain * std::sqrt(6.0f / static_cast<float>(m.rows() + m.cols()));
    for (float& v : m.values()) v = rng.uniform(-limit, limit);
  };
  fill(net.input_);
  for (auto& l : net.layers_) {
    fill(l.conv);
    fill(l.out);
  }
  return net;
}

std::vector<std::pair<std::string, const DenseMatrix*>> CondNet::tensors() const {
  std::vector<std::pair<std::string, const DenseMatrix*>> out;
  out.emplace_back("cond.input", &input_);
  out.emplace_back("cond.input_bias", &input_bias_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "cond.layer" + std::to_string(i) + ".";
    out.emplace_back(p + "conv", &layers_[i].conv);
    out.emplace_back(p + "conv_bias", &layers_[i].conv_bias);
    out.emplace_back(p + "out", &layers_[i].out);
    out.emplace_back(p + "out_bias", &layers_[i].out_bias);
  }
  return out;
}

std::vector<std::pair<std::string, DenseMatrix*>> CondNet::tensors() {
  std::vector<std::pair<std::string, DenseMatrix*>> out;
  for (auto& [name, m] : std::as_const(*this).tensors()) {
    out.emplace_back(name, const_cast<DenseMatrix*>(m));
  }
  return out;
}

void CondNet::validate() const {
  config_.validate();
  const CondNet reference(config_);
  auto expected = reference.tensors();
  auto actual = tensors();
  if (expected.size() != actual.size()) {
    throw InputError("conditioning net has the wrong number of layers");
  }
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const auto* a = actual[i].second;
    const auto* e = expected[i].second;
    if (a->rows() != e->rows() || a->cols() != e->cols()) {
      throw InputError(actual[i].first + " has the wrong shape");
    }
    if (!a->all_finite()) throw InputError(actual[i].first + " is not finite");
  }
}

void CondNet::check_range(std::size_t length, std::size_t begin,
                          std::size_t end) const {
  if (begin >= end || end > length) {
    throw InputError("conditioning range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") is empty or exceeds length " +
                     std::to_string(length));
  }
  if (input_.empty()) throw InputError("conditioning net is not initialized");
}

DenseMatrix CondNet::forward_window(const DenseMatrix& x0, std::size_t begin,
                                    std::size_t end, std::size_t length) const {
  const std::size_t res = config_.residual_channels;
  const std::size_t conv = config_.conv_channels;
  const std::size_t in = config_.input_channels;
  const std::size_t K = config_.kernel;

  // Rows of the current activation that are still needed.
  std::size_t rows = x0.rows();
  std::vector<float> x(rows * res, 0.0f);
  for (std::size_t r = 0; r < rows; ++r) {
    if (begin + r >= length) continue;
    float* out = x.data() + r * res;
    for (std::size_t co = 0; co < res; ++co) out[co] = input_bias_(co, 0);
    for (std::size_t c = 0; c < in; ++c) {
      const float v = x0(r, c);
      const float* w = input_.data() + c * res;
      for (std::size_t co = 0; co < res; ++co) out[co] += w[co] * v;
    }
  }

  std::vector<float> hidden(conv);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const CondLayer& layer = layers_[l];
    const std::size_t d = config_.dilations[l];
    const std::size_t next_rows = rows - (K - 1) * d;
    std::vector<float> y(next_rows * res, 0.0f);
    for (std::size_t r = 0; r < next_rows; ++r) {
      if (begin + r >= length) continue;
      for (std::size_t cc = 0; cc < conv; ++cc) hidden[cc] = layer.conv_bias(cc, 0);
      for (std::size_t k = 0; k < K; ++k) {
        const float* src = x.data() + (r + k * d) * res;
        for (std::size_t ci = 0; ci < res; ++ci) {
          const float v = src[ci];
          const float* w = layer.conv.data() + (k * res + ci) * conv;
          for (std::size_t cc = 0; cc < conv; ++cc) hidden[cc] += w[cc] * v;
        }
      }
      float* out = y.data() + r * res;
      for (std::size_t co = 0; co < res; ++co) out[co] = layer.out_bias(co, 0);
      for (std::size_t cc = 0; cc < conv; ++cc) {
        const float a = std::max(hidden[cc], 0.0f);
        const float* w = layer.out.data() + cc * res;
        for (std::size_t co = 0; co < res; ++co) out[co] += w[co] * a;
      }
      const float* skip = x.data() + r * res;
      for (std::size_t co = 0; co < res; ++co) out[co] = skip[co] + out[co];
    }
    x = std::move(y);
    rows = next_rows;
  }
  const std::size_t n = end - begin;
  return DenseMatrix(n, res, std::vector<float>(x.begin(), x.begin() + n * res));
}

}  // namespace wavernn
