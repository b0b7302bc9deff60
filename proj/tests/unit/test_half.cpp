#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "rtstt/half.hpp"

namespace rtstt {
namespace {

// Reference decoding straight from the binary16 definition.
double decode_reference(std::uint16_t bits) {
  const int sign = bits >> 15;
  const int exp = (bits >> 10) & 0x1f;
  const int mant = bits & 0x3ff;
  double v;
  if (exp == 0) {
    v = std::ldexp(mant, -24);
  } else if (exp == 31) {
    v = mant ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  } else {
    v = std::ldexp(1024 + mant, exp - 25);
  }
  return sign ? -v : v;
}

// Nearest-even rounding by search over every finite non-negative half.
std::uint16_t encode_reference(float f) {
  static const std::vector<double> grid = [] {
    std::vector<double> g;
    for (std::uint16_t b = 0; b < 0x7c00; ++b) g.push_back(decode_reference(b));
    return g;
  }();
  const std::uint16_t sign = std::signbit(f) ? 0x8000 : 0;
  const double a = std::fabs(static_cast<double>(f));
  if (std::isnan(f)) return 0x7e00;
  // Values at or beyond max + half an ulp (65520) round to infinity.
  if (a >= 65520.0) return sign | 0x7c00;
  auto it = std::lower_bound(grid.begin(), grid.end(), a);
  if (it == grid.end()) return static_cast<std::uint16_t>(sign | (grid.size() - 1));
  std::size_t hi = static_cast<std::size_t>(it - grid.begin());
  if (grid[hi] == a || hi == 0) return static_cast<std::uint16_t>(sign | hi);
  const std::size_t lo = hi - 1;
  const double dlo = a - grid[lo], dhi = grid[hi] - a;
  std::size_t pick;
  if (dlo < dhi) {
    pick = lo;
  } else if (dhi < dlo) {
    pick = hi;
  } else {
    pick = (lo % 2 == 0) ? lo : hi;
  }
  return static_cast<std::uint16_t>(sign | pick);
}

TEST(Half, EveryPatternDecodesAndReencodes) {
  for (std::uint32_t b = 0; b <= 0xffff; ++b) {
    const auto bits = static_cast<std::uint16_t>(b);
    const float f = half_bits::to_float(bits);
    const double ref = decode_reference(bits);
    if (std::isnan(ref)) {
      EXPECT_TRUE(std::isnan(f));
      EXPECT_TRUE(std::isnan(half_bits::to_float(half_bits::from_float(f))));
      continue;
    }
    ASSERT_EQ(static_cast<double>(f), ref) << "bits " << b;
    ASSERT_EQ(half_bits::from_float(f), bits) << "bits " << b;
  }
}

TEST(Half, RoundsToNearestEvenLikeReference) {
  std::mt19937 rng(1234);
  std::uniform_int_distribution<std::uint32_t> any;
  std::uniform_real_distribution<float> exps(-30.0f, 17.0f);
  for (int i = 0; i < 200000; ++i) {
    float f;
    if (i % 2 == 0) {
      const std::uint32_t u = any(rng);
      std::memcpy(&f, &u, sizeof f);
      if (std::isnan(f)) continue;
    } else {
      f = std::exp2(exps(rng)) * ((i % 4 == 1) ? 1.0f : -1.0f);
    }
    ASSERT_EQ(half_bits::from_float(f), encode_reference(f)) << "value " << f;
  }
}

TEST(Half, TiesAndBoundaries) {
  EXPECT_EQ(half_bits::from_float(65504.0f), 0x7bff);
  EXPECT_EQ(half_bits::from_float(65519.0f), 0x7bff);
  EXPECT_EQ(half_bits::from_float(65520.0f), 0x7c00);
  EXPECT_EQ(half_bits::from_float(std::ldexp(1.0f, -24)), 0x0001);
  EXPECT_EQ(half_bits::from_float(std::ldexp(1.0f, -25)), 0x0000);  // tie to even (zero)
  EXPECT_EQ(half_bits::from_float(std::ldexp(3.0f, -25)), 0x0002);  // tie to even (two)
  EXPECT_EQ(half_bits::from_float(1.0f + std::ldexp(1.0f, -11)), 0x3c00);
  EXPECT_EQ(half_bits::from_float(1.0f + std::ldexp(3.0f, -11)), 0x3c02);
  EXPECT_EQ(half_bits::from_float(-0.0f), 0x8000);
}

TEST(Half, CastExamples) {
  EXPECT_EQ(static_cast<float>(Half(1.0f)), 1.0f);
  EXPECT_LT(std::fabs(static_cast<float>(Half(0.1f)) - 0.1f), 1e-3f);
}

TEST(Half, RelativeErrorBoundForNormalValues) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> exps(-14.0f, 15.0f);
  for (int i = 0; i < 100000; ++i) {
    const float f = std::exp2(exps(rng));
    const float back = static_cast<float>(Half(f));
    EXPECT_LE(std::fabs(back - f) / f, std::ldexp(1.0f, -11));
  }
}

TEST(Half, BulkConversionsMatchScalar) {
  std::mt19937 rng(99);
  std::normal_distribution<float> nd(0.0f, 100.0f);
  std::vector<float> src(1037);
  for (auto& v : src) v = nd(rng);
  std::vector<Half> narrowed(src.size());
  narrow(src, narrowed.data());
  std::vector<float> widened(src.size());
  widen(narrowed, widened.data());
  std::vector<float> rounded = src;
  round_to_half(rounded);
  for (std::size_t i = 0; i < src.size(); ++i) {
    EXPECT_EQ(narrowed[i].bits, half_bits::from_float(src[i]));
    EXPECT_EQ(widened[i], half_bits::to_float(narrowed[i].bits));
    EXPECT_EQ(rounded[i], widened[i]);
  }
}

}  // namespace
}  // namespace rtstt
