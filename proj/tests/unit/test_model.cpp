#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rtstt/model.hpp"

namespace rtstt {
namespace {

// Parameter count written out from the layer list, independent of the
// weight layout code.
std::size_t expected_params(const ModelConfig& c) {
  auto conv = [](std::size_t ci, std::size_t co, std::size_t k, std::size_t g) { return co * (ci / g) * k * k + co; };
  auto norm = [](std::size_t ch) { return 2 * ch; };
  auto lin = [](std::size_t i, std::size_t o) { return i * o + o; };
  auto lstm = [](std::size_t i, std::size_t h) { return 4 * h * i + 4 * h * h + 4 * h; };
  const std::size_t F = c.f_kept, d = F / c.tdf_divisor, S = c.sources, C = 2 * c.c0;
  auto block = [&](std::size_t ch) { return 5 * conv(ch, ch, 3, 1) + 4 * norm(ch) + lin(F, d) + lin(d, F); };
  const std::size_t lat = static_cast<std::size_t>(c.g) << c.layers, H = 2 * lat;
  std::size_t t = conv(C, c.g, 1, 1);
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::size_t w = static_cast<std::size_t>(c.g) << i;
    t += block(w) + conv(w, 2 * w, 1, 1);
    t += conv(S * 2 * w, S * w, 1, c.fusion_mode == FusionMode::Joint ? 1 : S) + block(w);
  }
  t += block(lat) + c.l_repeats * 2 * (norm(lat) + lstm(lat, H) + lin(H, lat)) + conv(lat, S * lat, 1, 1);
  t += conv(S * c.g, S * C, 1, S);
  return t;
}

Tensor<float> random_frames(const ModelConfig& cfg, std::size_t T, std::uint32_t seed, float scale = 10.0f) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> nd(0.0f, scale);
  Tensor<float> x({T, 1, cfg.spec_channels(), cfg.f_kept});
  for (auto& v : x.data()) v = nd(rng);
  return x;
}

std::vector<ModelConfig> variants() {
  ModelConfig base;
  std::vector<ModelConfig> out{base};
  ModelConfig c = base;
  c.path_mode = PathMode::Dual;
  out.push_back(c);
  c = base;
  c.fusion_mode = FusionMode::Separate;
  out.push_back(c);
  c = base;
  c.layers = 2;
  c.g = 8;
  out.push_back(c);
  c = base;
  c.dtype = DType::F16;
  out.push_back(c);
  return out;
}

TEST(ModelGraph, DefaultParameterCount) {
  const ModelConfig cfg;
  const ModelGraph m = ModelGraph::random(cfg, 1);
  EXPECT_EQ(m.parameter_count(), 357072u);
  EXPECT_EQ(m.parameter_count(), expected_params(cfg));
  EXPECT_GE(m.parameter_count(), 300000u);
  EXPECT_LE(m.parameter_count(), 480000u);
  EXPECT_EQ(cfg.hidden(), 64u);
  EXPECT_EQ(cfg.tdf_width(), 48u);
  EXPECT_EQ(m.latent_block().bottleneck(), 48u);
}

TEST(ModelGraph, ParameterCountsOfVariants) {
  for (const auto& cfg : variants()) {
    const std::size_t n = ModelGraph::random(cfg, 2).parameter_count();
    EXPECT_EQ(n, expected_params(cfg)) << cfg.fingerprint();
  }
  ModelConfig one, two;
  two.layers = 2;
  EXPECT_GT(parameter_count(ModelGraph::random(two, 1)), parameter_count(ModelGraph::random(one, 1)));
  ModelConfig two8 = two;
  two8.g = 8;
  EXPECT_LT(expected_params(two8), expected_params(two));
  EXPECT_LT(ModelGraph::random(two8, 1).parameter_count(), ModelGraph::random(two, 1).parameter_count());
}

TEST(ModelGraph, DoublingGQuadruplesConvWeights) {
  auto conv_weights = [](const ModelConfig& c) {
    std::size_t n = 0;
    for (const auto& p : weight_layout(c))
      if (p.kind == ParamKind::Weight && p.shape.size() == 4) n += shape_size(p.shape);
    return static_cast<double>(n);
  };
  ModelConfig g16, g32;
  g32.g = 32;
  EXPECT_NEAR(conv_weights(g32) / conv_weights(g16), 4.0, 0.05);
}

TEST(ModelGraph, JointFusionHasSTimesTheWeights) {
  ModelConfig joint, separate;
  separate.fusion_mode = FusionMode::Separate;
  const ConvSpec j = decoder_fusion_spec(joint, 0), s = decoder_fusion_spec(separate, 0);
  EXPECT_EQ(j.weight_count(), joint.sources * s.weight_count());
  EXPECT_EQ(j.weight_count(), (4u * 16) * (4u * 32));
}

TEST(ModelGraph, SameSeedSameWeights) {
  const ModelConfig cfg;
  EXPECT_EQ(random_init(cfg, 5), random_init(cfg, 5));
  EXPECT_FALSE(random_init(cfg, 5) == random_init(cfg, 6));
}

TEST(ModelGraph, ShapeContract) {
  const ModelConfig cfg;
  const ModelGraph m = ModelGraph::random(cfg, 1);
  Spectrogram spec{Tensor<float>({4, 384, 8})};
  std::mt19937 rng(3);
  std::normal_distribution<float> nd;
  for (auto& v : spec.data.data()) v = nd(rng);
  const Tensor<float> y = m.forward(spec);
  EXPECT_EQ(y.shape(), (Shape{4, 4, 384, 8}));
  for (float v : y.data()) ASSERT_TRUE(std::isfinite(v));
  EXPECT_THROW(m.forward(Spectrogram{Tensor<float>({4, 383, 8})}), ShapeError);
}

TEST(ModelGraph, ForwardLayoutMatchesFrameMajorPath) {
  const ModelConfig cfg;
  const ModelGraph m = ModelGraph::random(cfg, 1);
  const Tensor<float> frames = random_frames(cfg, 3, 4);
  Spectrogram spec{Tensor<float>({4, 384, 3})};
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t f = 0; f < 384; ++f) spec.data.at({c, f, t}) = frames.at({t, 0, c, f});
  auto st = m.new_state();
  const Tensor<float> a = m.forward_frames(frames, st);
  const Tensor<float> b = m.forward(spec);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t f = 0; f < 384; f += 7) ASSERT_EQ(a.at({t, s, c, f}), b.at({s, c, f, t}));
}

TEST(ModelGraph, CausalAtProbedFrames) {
  for (const auto& cfg : variants()) {
    const ModelGraph m = ModelGraph::random(cfg, 3);
    const Tensor<float> x = random_frames(cfg, 8, 5);
    auto s0 = m.new_state();
    const Tensor<float> ref = m.forward_frames(x, s0);
    for (std::size_t t : {0u, 3u, 6u}) {
      Tensor<float> y = x;
      std::mt19937 rng(static_cast<std::uint32_t>(t));
      std::normal_distribution<float> nd(0.0f, 50.0f);
      const std::size_t frame = cfg.spec_channels() * cfg.f_kept;
      for (std::size_t i = (t + 1) * frame; i < y.size(); ++i) y[i] = nd(rng);
      auto s1 = m.new_state();
      const Tensor<float> out = m.forward_frames(y, s1);
      const std::size_t per = out.size() / 8;
      for (std::size_t i = 0; i < (t + 1) * per; ++i) ASSERT_EQ(out[i], ref[i]) << cfg.fingerprint() << " t=" << t;
    }
  }
}

TEST(ModelGraph, FrameAtATimeEqualsBatch) {
  for (const auto& cfg : variants()) {
    const ModelGraph m = ModelGraph::random(cfg, 4);
    const Tensor<float> x = random_frames(cfg, 6, 6);
    auto whole_state = m.new_state();
    const Tensor<float> whole = m.forward_frames(x, whole_state);
    auto st = m.new_state();
    const std::size_t in_frame = x.size() / 6, out_frame = whole.size() / 6;
    std::size_t t = 0;
    for (std::size_t n : {1u, 2u, 3u}) {
      Tensor<float> part({n, 1, cfg.spec_channels(), cfg.f_kept},
                         std::vector<float>(x.data().begin() + t * in_frame, x.data().begin() + (t + n) * in_frame));
      const Tensor<float> y = m.forward_frames(part, st);
      for (std::size_t i = 0; i < y.size(); ++i) ASSERT_EQ(y[i], whole[t * out_frame + i]) << cfg.fingerprint();
      t += n;
    }
  }
}

TEST(ModelGraph, SourceSoftmaxIsNormalized) {
  const ModelConfig cfg;
  const ModelGraph m = ModelGraph::random(cfg, 1);
  auto st = m.new_state();
  ForwardTrace trace;
  m.forward_frames(random_frames(cfg, 4, 7), st, &trace);
  const Tensor<float>& p = trace.source_softmax;
  ASSERT_EQ(p.shape(), (Shape{4, 4, 32, 384}));
  const std::size_t inner = 32 * 384;
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < inner; ++i) {
      double sum = 0.0;
      for (std::size_t s = 0; s < 4; ++s) sum += p[(t * 4 + s) * inner + i];
      ASSERT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(ModelGraph, HalfPrecisionAgreesWithFloat) {
  ModelConfig cfg;
  const WeightSet w32 = random_init(cfg, 9);
  const ModelGraph m32 = ModelGraph::build(w32);
  const ModelGraph m16 = ModelGraph::build(to_f16(w32));
  EXPECT_EQ(m16.config().dtype, DType::F16);
  const Tensor<float> x = random_frames(cfg, 6, 8, 1.0f);
  auto s32 = m32.new_state();
  auto s16 = m16.new_state();
  const Tensor<float> a = m32.forward_frames(x, s32);
  const Tensor<float> b = m16.forward_frames(x, s16);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * static_cast<double>(a[i] - b[i]);
    den += static_cast<double>(a[i]) * a[i];
  }
  EXPECT_LT(std::sqrt(num / den), 2e-2);
}

TEST(ModelGraph, RejectsForeignWeights) {
  ModelConfig cfg;
  WeightSet ws = random_init(cfg, 1);
  ws.config.g = 8;
  EXPECT_THROW(ModelGraph::build(ws), WeightError);
  WeightSet ws2 = random_init(cfg, 1);
  ws2.entries.pop_back();
  EXPECT_THROW(ModelGraph::build(ws2), WeightError);
  const ModelGraph m = ModelGraph::random(cfg, 1);
  auto st = m.new_state();
  EXPECT_THROW(m.forward_frames(Tensor<float>({2, 1, 2, 384}), st), ShapeError);
}

// Block-level contracts.

TfcTdfBlock zero_block(std::size_t c, std::size_t F, std::size_t d) {
  const ConvSpec k3{c, c, 3, 3, 1};
  TfcTdfBlock b;
  b.tfc1_conv1 = b.tfc1_conv2 = b.tfc2_conv1 = b.tfc2_conv2 = b.residual = Conv2d::zeros(k3);
  b.tfc1_norm1 = b.tfc1_norm2 = b.tfc2_norm1 = b.tfc2_norm2 = Norm::identity(c);
  b.tdf_fc1 = Linear::from_rows(F, d, std::vector<float>(F * d), std::vector<float>(d));
  b.tdf_fc2 = Linear::from_rows(d, F, std::vector<float>(F * d), std::vector<float>(F));
  return b;
}

TEST(Blocks, TfcTdfShapeAndZeroWeights) {
  const ModelConfig cfg;
  const ModelGraph m = ModelGraph::random(cfg, 1);
  const Tensor<float> x = random_frames(cfg, 5, 9);
  Tensor<float> wide({5, 1, 32, 384});
  std::copy(x.data().begin(), x.data().end(), wide.data().begin());
  EXPECT_EQ(medium_tfc_tdf(wide, m.latent_block()).shape(), wide.shape());
  const Tensor<float> y = medium_tfc_tdf(wide, zero_block(32, 384, 48));
  for (float v : y.data()) ASSERT_EQ(v, 0.0f);
}

PathModule zero_path(std::size_t c, std::size_t H) {
  const Lstm lstm = Lstm::from_rows({c, H}, std::vector<float>(4 * H * c), std::vector<float>(4 * H * H),
                                    std::vector<float>(4 * H));
  const Linear fc = Linear::from_rows(H, c, std::vector<float>(H * c), std::vector<float>(c));
  const RnnBlock blk{Norm::identity(c), lstm, fc};
  return {blk, blk};
}

TEST(Blocks, ZeroPathModuleIsIdentity) {
  Tensor<float> x({4, 1, 6, 10});
  std::mt19937 rng(1);
  std::normal_distribution<float> nd;
  for (auto& v : x.data()) v = nd(rng);
  const PathModule pm = zero_path(6, 12);
  PathState<float> st{LstmState<float>::zeros(10, 12), LstmState<float>::zeros(10, 12)};
  EXPECT_EQ(single_path_module(x, pm, st), x);
  EXPECT_EQ(dual_path_module(x, pm, st), x);
}

TEST(Blocks, PathModulesSplitWithCarry) {
  const ModelConfig cfg;
  const ModelGraph m = ModelGraph::random(cfg, 2);
  const PathModule& pm = m.path_modules()[0];
  Tensor<float> x({16, 1, 32, 384});
  std::mt19937 rng(2);
  std::normal_distribution<float> nd;
  for (auto& v : x.data()) v = nd(rng);
  for (const bool dual : {false, true}) {
    auto run = [&](const Tensor<float>& in, PathState<float>& st) {
      return dual ? dual_path_module(in, pm, st) : single_path_module(in, pm, st);
    };
    PathState<float> whole_st{LstmState<float>::zeros(384, 64), LstmState<float>::zeros(384, 64)};
    const Tensor<float> whole = run(x, whole_st);
    EXPECT_EQ(whole.shape(), x.shape());
    PathState<float> st{LstmState<float>::zeros(384, 64), LstmState<float>::zeros(384, 64)};
    const std::size_t half = 8 * 32 * 384;
    for (std::size_t h = 0; h < 2; ++h) {
      Tensor<float> part({8, 1, 32, 384}, std::vector<float>(x.data().begin() + h * half, x.data().begin() + (h + 1) * half));
      const Tensor<float> y = run(part, st);
      for (std::size_t i = 0; i < half; ++i) ASSERT_EQ(y[i], whole[h * half + i]) << (dual ? "dual" : "single");
    }
  }
}

TEST(Blocks, DecoderFusionModes) {
  ModelConfig joint, separate;
  separate.fusion_mode = FusionMode::Separate;
  const ModelGraph mj = ModelGraph::random(joint, 1), ms = ModelGraph::random(separate, 1);
  Tensor<float> x({2, 4, 32, 384});
  std::mt19937 rng(3);
  std::normal_distribution<float> nd;
  for (auto& v : x.data()) v = nd(rng);
  const Tensor<float> yj = decoder_fusion(x, mj.decoder_conv(0));
  const Tensor<float> ys = decoder_fusion(x, ms.decoder_conv(0));
  EXPECT_EQ(yj.shape(), (Shape{2, 4, 16, 384}));
  EXPECT_EQ(ys.shape(), yj.shape());

  // Separate mode: source s only sees source s. Perturb source 1 and check
  // the other sources are untouched.
  Tensor<float> x2 = x;
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 32 * 384; ++i) x2[(t * 4 + 1) * 32 * 384 + i] += 1.0f;
  const Tensor<float> ys2 = decoder_fusion(x2, ms.decoder_conv(0));
  const Tensor<float> yj2 = decoder_fusion(x2, mj.decoder_conv(0));
  bool joint_mixed = false;
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t s : {0u, 2u, 3u})
      for (std::size_t i = 0; i < 16 * 384; ++i) {
        const std::size_t k = (t * 4 + s) * 16 * 384 + i;
        ASSERT_EQ(ys2[k], ys[k]);
        joint_mixed = joint_mixed || yj2[k] != yj[k];
      }
  EXPECT_TRUE(joint_mixed);
}

}  // namespace
}  // namespace rtstt
