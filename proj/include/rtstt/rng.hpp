#pragma once

#include <cstdint>
#include <string_view>

namespace rtstt {

/// SplitMix64 used as a counter-based generator: draw i of a stream is
/// mix64(key + (i + 1) * golden_gamma), with key = mix64(seed ^ fnv1a64(name)).
/// No state advances between draws, so any element can be regenerated alone.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view stream) : key_(mix64(seed ^ fnv1a64(stream))) {}

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char ch : s) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001B3ull;
    }
    return h;
  }

  std::uint64_t bits(std::uint64_t i) const { return mix64(key_ + (i + 1) * 0x9E3779B97F4A7C15ull); }

  /// Uniform in [0, 1) on a 2^-24 grid, exact in float.
  float uniform(std::uint64_t i) const { return static_cast<float>(bits(i) >> 40) * 0x1.0p-24f; }

 private:
  std::uint64_t key_;
};

}  // namespace rtstt
