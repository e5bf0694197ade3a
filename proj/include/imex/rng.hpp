#pragma once

#include <cstdint>

#include "imex/common.hpp"

namespace imex {

/// SplitMix64 generator. Same seed gives the same stream on every platform,
/// which is what makes dataset generation and training runs reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform integer in the inclusive range [lo, hi], bias-free via
  /// rejection of the truncated tail.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) throw ValueError("Rng::uniform_int: lo > hi");
    const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());  // full 64-bit span
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % range + 1) % range;
    uint64_t x;
    do {
      x = next_u64();
    } while (x > limit);
    return lo + static_cast<int64_t>(x % range);
  }

  /// Uniform in [0, 1): top 53 bits over 2^53.
  double uniform_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Approximate standard normal: sum of 12 uniform draws minus 6.
  double gaussian_clt() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform_unit();
    return s - 6.0;
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace imex
