#pragma once

#include <cstdint>

#include "relup/normal.hpp"

namespace relup {

// Counter-based random stream: every draw is a pure function of
// (seed, stream index, draw counter), so sample i can be generated on any
// thread in any order and the sequence is identical.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(mix(seed + 0x9e3779b97f4a7c15ULL) ^ mix(stream + 0xbf58476d1ce4e5b9ULL))),
        counter_(0) {}

  /// Uniform draw in the open interval (0,1).
  double uniform() {
    const std::uint64_t z = mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
    // 53-bit mantissa, shifted into (0,1) so the Normal quantile stays finite.
    return (static_cast<double>(z >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard Normal draw via the quantile (inverse-CDF) method.
  double normal() { return std_normal_quantile(uniform()); }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace relup
