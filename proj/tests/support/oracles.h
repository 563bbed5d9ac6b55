#pragma once

// Independent reference implementations used as test oracles. They share
// no code with the library beyond plain data types and run in double
// precision with the most direct formulation possible.

#include <cstdint>
#include <span>
#include <vector>

#include "wavernn/cell.h"
#include "wavernn/cond_net.h"
#include "wavernn/matrix.h"

namespace oracle {

std::vector<double> matvec(const wavernn::DenseMatrix& m,
                           std::span<const float> x);

std::vector<double> softmax(std::span<const double> logits);

// Rounds through IEEE binary16 with a hand-written round-to-nearest-even.
float round_half(float v);

struct CellOutput {
  std::vector<double> state;
  std::vector<std::vector<double>> logits;  // one entry per part
};

// One full step of the cell given every current value (no placeholder):
// three unstacked gate products, explicit masking of the input matrix.
CellOutput cell_step(const wavernn::CellConfig& config,
                     const wavernn::CellTensors<float>& t,
                     std::span<const double> h_prev, std::span<const float> x);

// Teacher-forced NLL of the plain cell, nats per sample.
double sequence_nll(const wavernn::CellConfig& config,
                    const wavernn::CellTensors<float>& t,
                    std::span<const std::uint16_t> waveform,
                    const wavernn::DenseMatrix& cond = {});

// Whole-sequence conditioning net output: input is length x channels, the
// result length x residual. Layers are evaluated over the full sequence
// with zeros past the end.
std::vector<std::vector<double>> cond_net(const wavernn::CondNet& net,
                                          const wavernn::DenseMatrix& input);

}  // namespace oracle
