#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rtstt/kernels.hpp"

namespace rtstt {
namespace {

std::vector<float> random_vec(std::size_t n, std::uint32_t seed, float scale = 1.0f) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> nd(0.0f, scale);
  std::vector<float> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

Tensor<float> random_tensor(Shape shape, std::uint32_t seed, float scale = 1.0f) {
  const std::size_t n = shape_size(shape);
  return Tensor<float>(std::move(shape), random_vec(n, seed, scale));
}

Conv2d random_conv(ConvSpec spec, std::uint32_t seed) {
  return Conv2d{spec, random_vec(spec.weight_count(), seed, 0.3f), random_vec(spec.out_channels, seed + 1, 0.1f)};
}

// Direct convolution in double over (T, B, Cin, F), zero history.
std::vector<double> conv_reference(const Tensor<float>& x, const Conv2d& conv) {
  const ConvSpec& s = conv.spec;
  const std::size_t T = x.dim(0), B = x.dim(1), Cin = x.dim(2), F = x.dim(3);
  const std::size_t cin_g = Cin / s.groups, cout_g = s.out_channels / s.groups;
  const long lag = static_cast<long>(s.kernel_time) - 1, pad = static_cast<long>(s.kernel_freq / 2);
  std::vector<double> y(T * B * s.out_channels * F);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < s.out_channels; ++o)
        for (std::size_t f = 0; f < F; ++f) {
          const std::size_t grp = o / cout_g;
          double acc = conv.bias[o];
          for (std::size_t ci = 0; ci < cin_g; ++ci)
            for (std::size_t a = 0; a < s.kernel_time; ++a)
              for (std::size_t q = 0; q < s.kernel_freq; ++q) {
                const long tt = static_cast<long>(t + a) - lag;
                const long ff = static_cast<long>(f + q) - pad;
                if (tt < 0 || ff < 0 || ff >= static_cast<long>(F)) continue;
                const double w = conv.weight[((o * cin_g + ci) * s.kernel_time + a) * s.kernel_freq + q];
                acc += w * x[((static_cast<std::size_t>(tt) * B + b) * Cin + grp * cin_g + ci) * F +
                             static_cast<std::size_t>(ff)];
              }
          y[((t * B + b) * s.out_channels + o) * F + f] = acc;
        }
  return y;
}

TEST(Gemm, MatchesScalarReferenceBitExactly) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t M = 1 + rng() % 21, N = 1 + rng() % 90, K = 1 + rng() % 70;
    const auto A = random_vec(M * K, rng()), B = random_vec(K * N, rng()), C0 = random_vec(M * N, rng());
    std::vector<float> fast = C0, ref = C0;
    detail::gemm_acc(M, N, K, A.data(), K, B.data(), N, fast.data(), N);
    detail::gemm_acc_reference(M, N, K, A.data(), K, B.data(), N, ref.data(), N);
    ASSERT_EQ(fast, ref) << M << "x" << N << "x" << K;
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        double d = C0[i * N + j];
        for (std::size_t k = 0; k < K; ++k) d += static_cast<double>(A[i * K + k]) * B[k * N + j];
        ASSERT_NEAR(fast[i * N + j], d, 1e-4 * (1.0 + std::fabs(d)));
      }
  }
}

TEST(Conv, IdentityPointwise) {
  Conv2d conv = Conv2d::zeros({3, 3, 1, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) conv.weight[c * 3 + c] = 1.0f;
  const auto x = random_tensor({5, 1, 3, 7}, 1);
  EXPECT_EQ(pointwise_conv(x, conv), x);
}

TEST(Conv, OnesSumOverChannels) {
  Conv2d conv = Conv2d::zeros({3, 2, 1, 1, 1});
  std::fill(conv.weight.begin(), conv.weight.end(), 1.0f);
  Tensor<float> x({2, 1, 3, 4});
  x.fill(1.0f);
  const auto y = pointwise_conv(x, conv);
  for (float v : y.data()) EXPECT_EQ(v, 3.0f);
}

TEST(Conv, WidensChannelsToG) {
  const auto conv = random_conv({4, 16, 1, 1, 1}, 3);
  const auto y = pointwise_conv(random_tensor({64, 1, 4, 384}, 4), conv);
  EXPECT_EQ(y.shape(), (Shape{64, 1, 16, 384}));
}

TEST(Conv, MatchesDirectReference) {
  for (std::size_t groups : {1u, 2u, 4u}) {
    const auto conv = random_conv({8, 4, 3, 3, groups}, 10 + static_cast<std::uint32_t>(groups));
    const auto x = random_tensor({6, 2, 8, 11}, 20);
    const auto y = conv2d_causal(x, conv);
    const auto ref = conv_reference(x, conv);
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-4) << "groups " << groups;
  }
}

TEST(Conv, ImpulseResponseIsCausal) {
  const auto conv = random_conv({1, 1, 3, 3, 1}, 7);
  Tensor<float> x({8, 1, 1, 5});
  x.at({3, 0, 0, 2}) = 1.0f;
  Conv2d no_bias = conv;
  no_bias.bias.assign(1, 0.0f);
  const auto y = conv2d_causal(x, no_bias);
  for (std::size_t t = 0; t < 8; ++t) {
    float energy = 0.0f;
    for (std::size_t f = 0; f < 5; ++f) energy += std::fabs(y.at({t, 0, 0, f}));
    if (t >= 3 && t <= 5) {
      EXPECT_GT(energy, 0.0f) << t;
    } else {
      EXPECT_EQ(energy, 0.0f) << t;
    }
  }
}

TEST(Conv, StreamingWithHistoryIsBitExact) {
  const auto conv = random_conv({2, 3, 3, 3, 1}, 8);
  const auto x = random_tensor({16, 1, 2, 8}, 9);
  const auto whole = conv2d_causal(x, conv);
  Tensor<float> hist({2, 1, 2, 8});
  std::vector<float> streamed;
  for (std::size_t t = 0; t < 16; ++t) {
    Tensor<float> frame({1, 1, 2, 8}, std::vector<float>(x.data().begin() + t * 16, x.data().begin() + (t + 1) * 16));
    const auto y = conv2d_causal(frame, conv, &hist);
    streamed.insert(streamed.end(), y.data().begin(), y.data().end());
  }
  EXPECT_EQ(streamed, whole.storage());
}

TEST(Conv, GroupedEqualsIndependentConvsBitExactly) {
  const std::size_t S = 4, cin = 8, cout = 4;
  const auto grouped = random_conv({S * cin, S * cout, 1, 1, S}, 30);
  const auto x = random_tensor({3, 1, S * cin, 16}, 31);
  const auto y = pointwise_conv(x, grouped);
  for (std::size_t s = 0; s < S; ++s) {
    Conv2d one{{cin, cout, 1, 1, 1},
               std::vector<float>(grouped.weight.begin() + s * cout * cin, grouped.weight.begin() + (s + 1) * cout * cin),
               std::vector<float>(grouped.bias.begin() + s * cout, grouped.bias.begin() + (s + 1) * cout)};
    Tensor<float> xs({3, 1, cin, 16});
    for (std::size_t t = 0; t < 3; ++t)
      std::copy_n(x.data().begin() + (t * S * cin + s * cin) * 16, cin * 16, xs.data().begin() + t * cin * 16);
    const auto ys = pointwise_conv(xs, one);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t i = 0; i < cout * 16; ++i) ASSERT_EQ(ys[t * cout * 16 + i], y[(t * S * cout + s * cout) * 16 + i]);
  }
}

TEST(Conv, RejectsBadShapes) {
  EXPECT_THROW(Conv2d::zeros({3, 4, 1, 1, 2}), ShapeError);
  EXPECT_THROW(Conv2d::zeros({4, 4, 2, 1, 1}), ShapeError);
  const auto conv = Conv2d::zeros({4, 4, 1, 1, 1});
  EXPECT_THROW(pointwise_conv(Tensor<float>({1, 1, 3, 5}), conv), ShapeError);
}

TEST(Linear, IdentityScalarAndWidths) {
  const Linear id = Linear::from_rows(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0});
  const auto x = random_tensor({2, 5, 3}, 40);
  EXPECT_EQ(linear(x, id), x);

  const Linear scalar = Linear::from_rows(1, 1, {2.0f}, {1.0f});
  EXPECT_EQ(linear(Tensor<float>({1}, {3.0f}), scalar)[0], 7.0f);

  const Linear restore = Linear::from_rows(64, 32, random_vec(64 * 32, 41), std::vector<float>(32, 0.0f));
  EXPECT_EQ(linear(random_tensor({384, 64}, 42), restore).shape(), (Shape{384, 32}));
  EXPECT_THROW(linear(random_tensor({4, 63}, 43), restore), ShapeError);
}

TEST(Norm, ConstantSliceGivesOffset) {
  Norm n{{2.0f, 3.0f}, {0.5f, -1.0f}};
  Tensor<float> x({1, 1, 2, 4});
  x.fill(7.0f);
  const auto y = causal_norm(x, n);
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_EQ(y.at({0, 0, 0, f}), 0.5f);
    EXPECT_EQ(y.at({0, 0, 1, f}), -1.0f);
  }
}

TEST(Norm, EachFrameIsStandardized) {
  const auto x = random_tensor({5, 2, 6, 20}, 50, 3.0f);
  const auto y = causal_norm(x, Norm::identity(6));
  for (std::size_t s = 0; s < 10; ++s) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < 120; ++i) sum += y[s * 120 + i];
    const double mean = sum / 120.0;
    for (std::size_t i = 0; i < 120; ++i) sq += (y[s * 120 + i] - mean) * (y[s * 120 + i] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(sq / 120.0, 1.0, 1e-4);
  }
}

TEST(Norm, FutureFramesDoNotLeak) {
  auto x = random_tensor({4, 1, 3, 8}, 51);
  const auto a = causal_norm(x, Norm::identity(3));
  for (std::size_t i = 2 * 24; i < x.size(); ++i) x[i] += 10.0f;
  const auto b = causal_norm(x, Norm::identity(3));
  for (std::size_t i = 0; i < 2 * 24; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Activations, GeluMatchesErfDefinition) {
  EXPECT_EQ(gelu(Tensor<float>({1}, {0.0f}))[0], 0.0f);
  const auto x = random_tensor({1000}, 60, 3.0f);
  const auto y = gelu(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    EXPECT_NEAR(y[i], 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))), 2e-6 * (1.0 + std::fabs(v)));
  }
}

TEST(Softmax, EqualLogitsAndLargeLogits) {
  const auto eq = softmax_over_axis(Tensor<float>({4}, {2.0f, 2.0f, 2.0f, 2.0f}), 0);
  for (float v : eq.data()) EXPECT_NEAR(v, 0.25f, 1e-7f);
  const auto big = softmax_over_axis(Tensor<float>({4}, {1000.0f, 0.0f, 0.0f, 0.0f}), 0);
  EXPECT_NEAR(big[0], 1.0f, 1e-7f);
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_TRUE(std::isfinite(big[i]));
    EXPECT_LT(big[i], 1e-30f);
  }
}

TEST(Softmax, EveryFiberSumsToOne) {
  const auto x = random_tensor({4, 16, 384, 8}, 61, 5.0f);
  const auto y = softmax_over_axis(x, 0);
  const std::size_t inner = 16 * 384 * 8;
  for (std::size_t j = 0; j < inner; ++j) {
    double sum = 0.0;
    for (std::size_t s = 0; s < 4; ++s) {
      const float v = y[s * inner + j];
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
      sum += v;
    }
    ASSERT_NEAR(sum, 1.0, 1e-6);
  }
}

struct LstmFixture {
  LstmSpec spec{5, 7};
  std::vector<float> w_ih = random_vec(28 * 5, 70, 0.5f);
  std::vector<float> w_hh = random_vec(28 * 7, 71, 0.5f);
  std::vector<float> bias = random_vec(28, 72, 0.2f);
  Lstm lstm = Lstm::from_rows(spec, w_ih, w_hh, bias);
};

// Textbook recurrence in double with library sigmoid/tanh.
std::vector<double> lstm_reference(const LstmFixture& fx, const Tensor<float>& x) {
  const std::size_t B = x.dim(0), T = x.dim(1), D = x.dim(2), H = fx.spec.hidden_size;
  std::vector<double> out(B * T * H);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> h(H, 0.0), c(H, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> g(4 * H);
      for (std::size_t r = 0; r < 4 * H; ++r) {
        double acc = fx.bias[r];
        for (std::size_t i = 0; i < D; ++i) acc += fx.w_ih[r * D + i] * x[(b * T + t) * D + i];
        for (std::size_t i = 0; i < H; ++i) acc += fx.w_hh[r * H + i] * h[i];
        g[r] = acc;
      }
      for (std::size_t k = 0; k < H; ++k) {
        c[k] = sig(g[H + k]) * c[k] + sig(g[k]) * std::tanh(g[2 * H + k]);
        h[k] = sig(g[3 * H + k]) * std::tanh(c[k]);
        out[(b * T + t) * H + k] = h[k];
      }
    }
  }
  return out;
}

TEST(Lstm, MatchesTextbookRecurrence) {
  LstmFixture fx;
  const auto x = random_tensor({3, 12, 5}, 73);
  auto st = LstmState<float>::zeros(3, 7);
  const auto y = lstm_seq(x, fx.lstm, st);
  const auto ref = lstm_reference(fx, x);
  for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y[i], ref[i], 2e-6);
}

TEST(Lstm, ZeroWeightsGiveZeros) {
  const Lstm zero = Lstm::from_rows({4, 3}, std::vector<float>(48), std::vector<float>(36), std::vector<float>(12));
  auto st = LstmState<float>::zeros(2, 3);
  const auto y = lstm_seq(random_tensor({2, 6, 4}, 74), zero, st);
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Lstm, SplitWithCarryIsBitExact) {
  LstmFixture fx;
  const auto x = random_tensor({2, 16, 5}, 75, 2.0f);
  auto whole_state = LstmState<float>::zeros(2, 7);
  const auto whole = lstm_seq(x, fx.lstm, whole_state);
  auto st = LstmState<float>::zeros(2, 7);
  for (std::size_t half = 0; half < 2; ++half) {
    Tensor<float> part({2, 8, 5});
    for (std::size_t b = 0; b < 2; ++b)
      std::copy_n(x.data().begin() + (b * 16 + half * 8) * 5, 40, part.data().begin() + b * 40);
    const auto y = lstm_seq(part, fx.lstm, st);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 8 * 7; ++i) ASSERT_EQ(y[b * 56 + i], whole[(b * 16 + half * 8) * 7 + i]);
  }
  EXPECT_EQ(st.h, whole_state.h);
  EXPECT_EQ(st.c, whole_state.c);
}

TEST(Lstm, HiddenStaysInsideUnitInterval) {
  LstmFixture fx;
  auto st = LstmState<float>::zeros(1, 7);
  const auto y = lstm_seq(random_tensor({1, 50, 5}, 76, 100.0f), fx.lstm, st);
  for (float v : y.data()) {
    EXPECT_GT(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
  auto bad = LstmState<float>::zeros(2, 7);
  EXPECT_THROW(lstm_seq(random_tensor({1, 2, 5}, 77), fx.lstm, bad), ShapeError);
}

double rel_l2(const Tensor<float>& ref, const Tensor<float>& est) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += (ref[i] - est[i]) * static_cast<double>(ref[i] - est[i]);
    den += static_cast<double>(ref[i]) * ref[i];
  }
  return std::sqrt(num / den);
}

TEST(HalfPath, PerOpErrorIsBounded) {
  const auto x = random_tensor({4, 2, 8, 24}, 80);
  const auto xh = cast<Half>(x);
  auto conv = random_conv({8, 8, 3, 3, 1}, 81);
  for (auto& w : conv.weight) w = static_cast<float>(Half(w));
  EXPECT_LT(rel_l2(conv2d_causal(x, conv), cast<float>(conv2d_causal(xh, conv))), 1e-2);
  EXPECT_LT(rel_l2(causal_norm(x, Norm::identity(8)), cast<float>(causal_norm(xh, Norm::identity(8)))), 1e-2);
  EXPECT_LT(rel_l2(gelu(x), cast<float>(gelu(xh))), 1e-2);
  EXPECT_LT(rel_l2(softmax_over_axis(x, 1), cast<float>(softmax_over_axis(xh, 1))), 1e-2);

  LstmFixture fx;
  const auto seq = random_tensor({2, 10, 5}, 82);
  auto s32 = LstmState<float>::zeros(2, 7);
  auto s16 = LstmState<Half>::zeros(2, 7);
  EXPECT_LT(rel_l2(lstm_seq(seq, fx.lstm, s32), cast<float>(lstm_seq(cast<Half>(seq), fx.lstm, s16))), 1e-2);
}

}  // namespace
}  // namespace rtstt
