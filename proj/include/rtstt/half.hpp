#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>

#if defined(__F16C__)
#include <immintrin.h>
#endif

namespace rtstt {

// IEEE 754 binary16 storage type. Arithmetic is always done after widening
// to float; only storage is 16 bits.
namespace half_bits {

// Round-to-nearest-even float -> binary16 (bit-twiddled, branch-light).
inline std::uint16_t from_float(float value) {
  constexpr std::uint32_t f32_infinity = 255u << 23;
  constexpr std::uint32_t f16_overflow = (127u + 16u) << 23;
  constexpr std::uint32_t denorm_magic = ((127u - 15u) + (23u - 10u) + 1u) << 23;

  std::uint32_t u = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = u & 0x80000000u;
  u ^= sign;

  std::uint16_t out;
  if (u >= f16_overflow) {
    out = (u > f32_infinity) ? 0x7E00 : 0x7C00;
  } else if (u < (113u << 23)) {
    // subnormal or zero: let the FPU do the rounding
    const float shifted = std::bit_cast<float>(u) + std::bit_cast<float>(denorm_magic);
    out = static_cast<std::uint16_t>(std::bit_cast<std::uint32_t>(shifted) - denorm_magic);
  } else {
    const std::uint32_t mant_odd = (u >> 13) & 1u;
    u += (static_cast<std::uint32_t>(15 - 127) << 23) + 0xFFFu;
    u += mant_odd;
    out = static_cast<std::uint16_t>(u >> 13);
  }
  return static_cast<std::uint16_t>(out | (sign >> 16));
}

inline float to_float(std::uint16_t bits) {
  constexpr std::uint32_t shifted_exp = 0x7C00u << 13;
  std::uint32_t o = (bits & 0x7FFFu) << 13;
  const std::uint32_t exp = shifted_exp & o;
  o += static_cast<std::uint32_t>(127 - 15) << 23;
  if (exp == shifted_exp) {
    o += static_cast<std::uint32_t>(128 - 16) << 23;
  } else if (exp == 0) {
    o += 1u << 23;
    o = std::bit_cast<std::uint32_t>(std::bit_cast<float>(o) - std::bit_cast<float>(113u << 23));
  }
  o |= static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  return std::bit_cast<float>(o);
}

}  // namespace half_bits

struct Half {
  std::uint16_t bits = 0;

  constexpr Half() = default;
  explicit Half(float value) : bits(half_bits::from_float(value)) {}

  static constexpr Half from_bits(std::uint16_t b) {
    Half h;
    h.bits = b;
    return h;
  }

  explicit operator float() const { return half_bits::to_float(bits); }

  friend constexpr bool operator==(Half a, Half b) { return a.bits == b.bits; }
};

static_assert(sizeof(Half) == 2);

/// Bulk conversions. Uses F16C when the target has it; results are identical
/// to the scalar routines (both are round-to-nearest-even).
inline void widen(std::span<const Half> src, float* dst) {
  std::size_t i = 0;
#if defined(__F16C__)
  for (; i + 8 <= src.size(); i += 8) {
    const __m128i h = _mm_loadu_si128(reinterpret_cast<const __m128i*>(src.data() + i));
    _mm256_storeu_ps(dst + i, _mm256_cvtph_ps(h));
  }
#endif
  for (; i < src.size(); ++i) dst[i] = half_bits::to_float(src[i].bits);
}

inline void narrow(std::span<const float> src, Half* dst) {
  std::size_t i = 0;
#if defined(__F16C__)
  for (; i + 8 <= src.size(); i += 8) {
    const __m256 f = _mm256_loadu_ps(src.data() + i);
    const __m128i h = _mm256_cvtps_ph(f, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(dst + i), h);
  }
#endif
  for (; i < src.size(); ++i) dst[i].bits = half_bits::from_float(src[i]);
}

/// Rounds every value to the nearest binary16 value, in place.
inline void round_to_half(std::span<float> values) {
  std::size_t i = 0;
#if defined(__F16C__)
  for (; i + 8 <= values.size(); i += 8) {
    const __m256 f = _mm256_loadu_ps(values.data() + i);
    const __m128i h = _mm256_cvtps_ph(f, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    _mm256_storeu_ps(values.data() + i, _mm256_cvtph_ps(h));
  }
#endif
  for (; i < values.size(); ++i) values[i] = half_bits::to_float(half_bits::from_float(values[i]));
}

}  // namespace rtstt
