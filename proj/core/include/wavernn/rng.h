#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace wavernn {

// Deterministic uniform source. The float conversion is done by hand so the
// stream is identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for generation lane `lane` of a run seeded `master`.
  static Rng substream(std::uint64_t master, std::uint64_t lane) {
    return Rng(mix(master ^ mix(lane + 0x9e3779b97f4a7c15ull)));
  }

  // Uniform in [0, 1) with 24 bits of resolution.
  float uniform() {
    return static_cast<float>(engine_() >> 40) * 0x1.0p-24f;
  }

  // Uniform in [lo, hi).
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; used only for corpus synthesis and init.
  double normal() {
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925 * u2);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace wavernn
