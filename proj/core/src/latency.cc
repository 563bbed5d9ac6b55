#include "wavernn/latency.h"

#include <cmath>
#include <limits>
#include <numeric>

#include "wavernn/errors.h"

namespace wavernn {

LatencyModel LatencyModel::uniform(std::size_t ops, double compute,
                                   double overhead, std::size_t samples) {
  LatencyModel m{std::vector<double>(ops, compute),
                 std::vector<double>(ops, overhead), samples};
  m.validate();
  return m;
}

void LatencyModel::validate() const {
  if (compute_seconds.empty()) throw InputError("latency model needs at least one op");
  if (compute_seconds.size() != overhead_seconds.size()) {
    throw InputError("compute and overhead lists differ in length");
  }
  if (samples == 0) throw InputError("sample count must be positive");
  for (std::size_t i = 0; i < ops(); ++i) {
    if (!(compute_seconds[i] >= 0.0) || !(overhead_seconds[i] >= 0.0) ||
        !std::isfinite(compute_seconds[i]) || !std::isfinite(overhead_seconds[i])) {
      throw InputError("op times must be finite and non-negative");
    }
  }
}

LatencyEstimate estimate_latency(const LatencyModel& m) {
  m.validate();
  const double c = std::accumulate(m.compute_seconds.begin(),
                                   m.compute_seconds.end(), 0.0);
  const double d = std::accumulate(m.overhead_seconds.begin(),
                                   m.overhead_seconds.end(), 0.0);
  const double n = static_cast<double>(m.samples);
  const double inf = std::numeric_limits<double>::infinity();
  LatencyEstimate e;
  e.total_seconds = n * (c + d);
  e.samples_per_second = e.total_seconds > 0.0 ? n / e.total_seconds : inf;
  // N * mean(d) is just the sum.
  e.overhead_bound = d > 0.0 ? 1.0 / d : inf;
  e.compute_bound = c > 0.0 ? 1.0 / c : inf;
  e.binding = d >= c ? "overhead" : "compute";
  return e;
}

double estimate_bandwidth(double parameters, double sample_rate,
                          double bytes_per_parameter) {
  if (!(parameters > 0.0) || !(sample_rate > 0.0) || !(bytes_per_parameter > 0.0)) {
    throw InputError("bandwidth inputs must be positive");
  }
  return parameters * sample_rate * bytes_per_parameter;
}

}  // namespace wavernn
