#pragma once

// Sampling-time cost model. Generating |u| samples runs the same N
// operations per sample, each with a compute time c_i and a fixed launch
// or synchronization overhead d_i:
//
//   T(u) = |u| * sum_i (c_i + d_i)

#include <cstddef>
#include <string>
#include <vector>

namespace wavernn {

struct LatencyModel {
  std::vector<double> compute_seconds;   // c_i
  std::vector<double> overhead_seconds;  // d_i
  std::size_t samples = 1;               // |u|

  // N operations with identical costs.
  static LatencyModel uniform(std::size_t ops, double compute, double overhead,
                              std::size_t samples = 1);

  std::size_t ops() const noexcept { return compute_seconds.size(); }
  void validate() const;  // throws InputError
};

struct LatencyEstimate {
  double total_seconds = 0.0;       // T(u)
  double samples_per_second = 0.0;  // |u| / T(u)
  // Rate if only overheads (resp. only compute) counted: 1 / (N * mean).
  double overhead_bound = 0.0;
  double compute_bound = 0.0;
  std::string binding;  // "overhead" or "compute"
};

LatencyEstimate estimate_latency(const LatencyModel& model);

// Bytes per second streamed when every parameter is read once per sample.
double estimate_bandwidth(double parameters, double sample_rate,
                          double bytes_per_parameter);

}  // namespace wavernn
