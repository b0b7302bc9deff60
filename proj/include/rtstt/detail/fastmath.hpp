#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

// Branch-free float transcendentals written so the compiler can vectorize
// the loops that call them. Accuracy is a few ulp, far inside what the
// half-precision path tolerates.
namespace rtstt::detail {

inline float exp_approx(float x) {
  x = std::min(88.0f, std::max(-87.0f, x));
  // round to nearest via truncation of a positive value (std::floor blocks vectorization)
  const float n = static_cast<float>(static_cast<std::int32_t>(x * 1.44269504088896341f + 128.5f)) - 128.0f;
  // Cody-Waite split of ln 2
  float r = x - n * 0.693359375f;
  r = r + n * 2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  const std::int32_t e = static_cast<std::int32_t>(n) + 127;
  return p * std::bit_cast<float>(static_cast<std::uint32_t>(e) << 23);
}

inline float sigmoid_approx(float x) { return 1.0f / (1.0f + exp_approx(-x)); }

inline float tanh_approx(float x) {
  // tanh(x) = sign(x) * (1 - e) / (1 + e), e = exp(-2|x|)
  const float e = exp_approx(-2.0f * std::fabs(x));
  return std::copysign((1.0f - e) / (1.0f + e), x);
}

// erf via Abramowitz & Stegun 7.1.26 (|error| < 1.5e-7).
inline float erf_approx(float x) {
  const float z = std::fabs(x);
  const float t = 1.0f / (1.0f + 0.3275911f * z);
  float poly = 1.061405429f;
  poly = poly * t - 1.453152027f;
  poly = poly * t + 1.421413741f;
  poly = poly * t - 0.284496736f;
  poly = poly * t + 0.254829592f;
  poly = poly * t;
  return std::copysign(1.0f - poly * exp_approx(-z * z), x);
}

inline float gelu(float x) { return 0.5f * x * (1.0f + erf_approx(x * 0.70710678118654752f)); }

}  // namespace rtstt::detail
