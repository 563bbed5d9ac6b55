#pragma once

// The conditioning network of the subscale scheme: a stack of dilated 1-D
// convolutions over the already generated sub-tensors. Taps point forward
// (output position p reads p, p + d, ..., p + (K-1) d), so the output at p
// depends on positions [p, p + receptive_field()] and nothing earlier.

#include <cstddef>
#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wavernn/matrix.h"
#include "wavernn/rng.h"

namespace wavernn {

struct CondNetConfig {
  std::size_t input_channels = 0;  // 2 per sub-tensor: value, availability
  std::size_t residual_channels = 64;
  std::size_t conv_channels = 64;
  std::size_t kernel = 3;
  std::vector<std::size_t> dilations = {1, 2, 4, 8};

  std::size_t receptive_field() const;
  void validate() const;  // throws InputError

  // 4 layers, dilations 1, 2, 4, 8, 64 channels.
  static CondNetConfig desk(std::size_t batch_factor);
  // 10 layers in two stages of dilations 1..16, 384 convolution and 768
  // residual channels; receptive field 124.
  static CondNetConfig large(std::size_t batch_factor);
  // Greedy doubling dilations with the widest receptive field below F.
  static CondNetConfig for_horizon(std::size_t batch_factor, std::size_t horizon,
                                   std::size_t channels = 16);

  friend bool operator==(const CondNetConfig&, const CondNetConfig&) = default;
};

struct CondLayer {
  DenseMatrix conv;       // (kernel * residual) x conv, row = tap * residual + ci
  DenseMatrix conv_bias;  // conv x 1
  DenseMatrix out;        // conv x residual
  DenseMatrix out_bias;   // residual x 1

  friend bool operator==(const CondLayer&, const CondLayer&) = default;
};

class CondNet {
 public:
  CondNet() = default;
  explicit CondNet(CondNetConfig config);  // zero weights

  static CondNet random(CondNetConfig config, Rng& rng, float gain = 1.0f);

  const CondNetConfig& config() const noexcept { return config_; }
  std::size_t output_dim() const noexcept { return config_.residual_channels; }

  DenseMatrix& input_weights() { return input_; }
  const DenseMatrix& input_weights() const { return input_; }
  DenseMatrix& input_bias() { return input_bias_; }
  const DenseMatrix& input_bias() const { return input_bias_; }
  std::vector<CondLayer>& layers() { return layers_; }
  const std::vector<CondLayer>& layers() const { return layers_; }

  // Outputs for positions [begin, end). `input(p, c)` supplies channel c at
  // position p < length; positions at or past `length` are zero at every
  // layer. Each output only reads positions up to end - 1 +
  // receptive_field(), and results do not depend on how the range is split.
  template <class Input>
  DenseMatrix forward(const Input& input, std::size_t length, std::size_t begin,
                      std::size_t end) const;

  // Every (name, matrix) pair in serialization order.
  std::vector<std::pair<std::string, const DenseMatrix*>> tensors() const;
  std::vector<std::pair<std::string, DenseMatrix*>> tensors();

  void validate() const;  // shapes; throws InputError

  friend bool operator==(const CondNet&, const CondNet&) = default;

 private:
  void check_range(std::size_t length, std::size_t begin, std::size_t end) const;
  DenseMatrix forward_window(const DenseMatrix& x0, std::size_t begin,
                             std::size_t end, std::size_t length) const;

  CondNetConfig config_;
  DenseMatrix input_;       // input_channels x residual
  DenseMatrix input_bias_;  // residual x 1
  std::vector<CondLayer> layers_;
};

template <class Input>
DenseMatrix CondNet::forward(const Input& input, std::size_t length,
                             std::size_t begin, std::size_t end) const {
  check_range(length, begin, end);
  const std::size_t rows = end - begin + config_.receptive_field();
  DenseMatrix x0(rows, config_.input_channels);
  for (std::size_t p = begin; p < std::min(begin + rows, length); ++p) {
    for (std::size_t c = 0; c < config_.input_channels; ++c) {
      x0(p - begin, c) = input(p, c);
    }
  }
  return forward_window(x0, begin, end, length);
}

}  // namespace wavernn
