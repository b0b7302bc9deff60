#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "rtstt/engine.hpp"
#include "rtstt/pipeline.hpp"
#include "rtstt/rng.hpp"

namespace rtstt {

struct VerifyResult {
  std::string suite;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline AudioChunk random_audio(std::size_t channels, std::size_t samples, std::uint64_t seed, const std::string& tag,
                               float scale = 1.0f, std::uint32_t rate = 44100) {
  AudioChunk a = AudioChunk::silence(channels, samples, rate);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const CounterRng rng(seed, tag + "." + std::to_string(ch));
    for (std::size_t i = 0; i < samples; ++i)
      a.channels[ch][i] = scale * static_cast<float>(2.0 * rng.uniform(i) - 1.0);
  }
  return a;
}

inline Tensor<float> random_frames(const ModelConfig& cfg, std::size_t frames, std::uint64_t seed,
                                   const std::string& tag, float scale) {
  Tensor<float> x({frames, 1, cfg.spec_channels(), cfg.f_kept});
  const CounterRng rng(seed, tag);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = scale * static_cast<float>(2.0 * rng.uniform(i) - 1.0);
  return x;
}

inline double relative_l2(std::span<const float> ref, std::span<const float> est) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = static_cast<double>(ref[i]) - est[i];
    num += d * d;
    den += static_cast<double>(ref[i]) * ref[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace detail

/// Perturbs every frame after a random probe index and checks that all
/// output frames up to the probe are bit-identical.
inline VerifyResult verify_causality(const ModelGraph& model, std::size_t probes = 20, std::size_t frames = 12,
                                     std::uint64_t seed = 11) {
  const ModelConfig& cfg = model.config();
  std::size_t changed = 0, compared = 0;
  double max_diff = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::string tag = "causality." + std::to_string(p);
    const Tensor<float> x = detail::random_frames(cfg, frames, seed, tag, 10.0f);
    const std::size_t t = CounterRng(seed, tag + ".t").bits(0) % frames;
    Tensor<float> y = x;
    const CounterRng noise(seed, tag + ".future");
    const std::size_t frame_size = cfg.spec_channels() * cfg.f_kept;
    for (std::size_t i = (t + 1) * frame_size; i < y.size(); ++i)
      y[i] += static_cast<float>(100.0 * (noise.uniform(i) - 0.5));
    auto s1 = model.new_state();
    auto s2 = model.new_state();
    const Tensor<float> a = model.forward_frames(x, s1);
    const Tensor<float> b = model.forward_frames(y, s2);
    const std::size_t out_frame = a.size() / frames;
    for (std::size_t i = 0; i < (t + 1) * out_frame; ++i) {
      ++compared;
      if (a[i] != b[i]) {
        ++changed;
        max_diff = std::max(max_diff, static_cast<double>(std::fabs(a[i] - b[i])));
      }
    }
  }
  std::ostringstream os;
  os << probes << " probes, " << compared << " past outputs compared, " << changed << " changed, max diff "
     << max_diff;
  return {"causality", changed == 0, os.str()};
}

/// Streams random audio in random whole-hop chunks and compares every
/// emission with the offline pipeline, including the emission counters.
inline VerifyResult verify_streaming(const ModelGraph& model, std::size_t inputs = 3, double seconds = 1.0,
                                     std::uint64_t seed = 12) {
  const ModelConfig& cfg = model.config();
  const std::size_t hop = cfg.hop, lat = model.config().latency_samples();
  const auto L = static_cast<std::size_t>(seconds * cfg.sample_rate) / hop * hop;
  std::size_t mismatched = 0, counter_errors = 0, pushes = 0;
  for (std::size_t k = 0; k < inputs; ++k) {
    const std::string tag = "streaming." + std::to_string(k);
    const AudioChunk audio = detail::random_audio(cfg.c0, L, seed, tag, 0.5f, cfg.sample_rate);
    const SourceAudio offline = separate(model, audio);
    Stream stream(model);
    SourceAudio got;
    const CounterRng sizes(seed, tag + ".chunks");
    std::size_t pos = 0;
    for (std::size_t draw = 0; pos < L; ++draw) {
      const std::size_t n = std::min(L - pos, (1 + sizes.bits(draw) % 8) * hop);
      AudioChunk block{cfg.sample_rate, std::vector<std::vector<float>>(cfg.c0)};
      for (std::size_t ch = 0; ch < cfg.c0; ++ch)
        block.channels[ch].assign(audio.channels[ch].begin() + static_cast<std::ptrdiff_t>(pos),
                                  audio.channels[ch].begin() + static_cast<std::ptrdiff_t>(pos + n));
      got.append(stream.push(block));
      pos += n;
      ++pushes;
      if (stream.samples_out() != (pos > lat ? pos - lat : 0)) ++counter_errors;
    }
    got.append(stream.flush());
    if (got.samples != L) ++counter_errors;
    for (std::size_t i = 0; i < std::min(got.data.size(), offline.data.size()); ++i)
      if (got.data[i] != offline.data[i]) ++mismatched;
  }
  std::ostringstream os;
  os << inputs << " inputs of " << L << " samples, " << pushes << " pushes, " << mismatched
     << " mismatched samples, " << counter_errors << " latency accounting errors";
  return {"streaming", mismatched == 0 && counter_errors == 0, os.str()};
}

/// Analysis/synthesis round trips: full band on random audio, and the
/// kept band on a sum of sinusoids below the cut.
inline VerifyResult verify_cola(const StftConfig& cfg = {}, std::size_t seconds = 2, std::uint64_t seed = 13) {
  const std::size_t L = seconds * 44100;
  const std::size_t edge = cfg.window_len;
  auto interior_error = [&](const AudioChunk& in, const AudioChunk& out) {
    double num = 0.0, den = 0.0;
    for (std::size_t ch = 0; ch < in.channel_count(); ++ch)
      for (std::size_t i = edge; i + edge < L; ++i) {
        const double d = static_cast<double>(in.channels[ch][i]) - out.channels[ch][i];
        num += d * d;
        den += static_cast<double>(in.channels[ch][i]) * in.channels[ch][i];
      }
    return std::sqrt(num / den);
  };

  const AudioChunk noise = detail::random_audio(2, L, seed, "cola.noise");
  StftConfig full = cfg;
  full.f_kept = cfg.f_full();
  const AudioChunk back = istft_overlap_add(band_restore(stft_forward(noise, full), cfg.f_full()), full);
  const double full_err = interior_error(noise, back);

  AudioChunk tones = AudioChunk::silence(2, L);
  const CounterRng rng(seed, "cola.tones");
  const double pi = std::acos(-1.0);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    for (std::size_t j = 0; j < 8; ++j) {
      const std::size_t bin = 1 + rng.bits(ch * 64 + j) % (cfg.f_kept - 2);
      const double phase = 2.0 * pi * rng.uniform(ch * 64 + 32 + j);
      for (std::size_t i = 0; i < L; ++i)
        tones.channels[ch][i] += static_cast<float>(
            0.1 * std::cos(2.0 * pi * static_cast<double>(bin) * static_cast<double>(i) / cfg.window_len + phase));
    }
  }
  const AudioChunk cut = istft_overlap_add(band_restore(stft_forward(tones, cfg), cfg.f_full()), cfg);
  const double band_err = interior_error(tones, cut);

  std::ostringstream os;
  os << "full-band relative L2 " << full_err << ", band-limited relative L2 " << band_err;
  return {"cola", full_err < 1e-6 && band_err < 1e-6, os.str()};
}

/// Every (frame, channel, bin) fiber of the source softmax sums to one.
inline VerifyResult verify_softmax(const ModelGraph& model, std::size_t inputs = 5, std::size_t frames = 4,
                                   std::uint64_t seed = 14) {
  const ModelConfig& cfg = model.config();
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs; ++k) {
    const Tensor<float> x = detail::random_frames(cfg, frames, seed, "softmax." + std::to_string(k), 10.0f);
    auto st = model.new_state();
    ForwardTrace trace;
    model.forward_frames(x, st, &trace);
    const Tensor<float>& p = trace.source_softmax;
    const std::size_t S = p.dim(1), inner = p.dim(2) * p.dim(3);
    for (std::size_t t = 0; t < p.dim(0); ++t)
      for (std::size_t i = 0; i < inner; ++i) {
        double sum = 0.0;
        for (std::size_t s = 0; s < S; ++s) sum += p[(t * S + s) * inner + i];
        worst = std::max(worst, std::fabs(sum - 1.0));
      }
  }
  std::ostringstream os;
  os << inputs << " inputs, max |sum - 1| = " << worst;
  return {"softmax", worst <= 1e-6, os.str()};
}

inline VerifyResult verify_params(const ModelGraph& model, std::size_t lo = 300000, std::size_t hi = 480000) {
  const std::size_t n = model.parameter_count();
  std::ostringstream os;
  os << n << " parameters, expected within [" << lo << ", " << hi << "]";
  return {"params", n >= lo && n <= hi, os.str()};
}

/// End-to-end agreement of the half-precision model with the float model
/// it was converted from, on unit-scale random audio.
inline VerifyResult verify_f16(const ModelConfig& config, std::uint64_t weight_seed = 1, std::size_t inputs = 2,
                               double seconds = 0.5, std::uint64_t seed = 15) {
  ModelConfig c32 = config;
  c32.dtype = DType::F32;
  const WeightSet w32 = random_init(c32, weight_seed);
  const ModelGraph m32 = ModelGraph::build(w32);
  const ModelGraph m16 = ModelGraph::build(to_f16(w32));
  const auto L = static_cast<std::size_t>(seconds * c32.sample_rate);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs; ++k) {
    const AudioChunk audio = detail::random_audio(c32.c0, L, seed, "f16." + std::to_string(k), 1.0f, c32.sample_rate);
    const SourceAudio a = separate(m32, audio);
    const SourceAudio b = separate(m16, audio);
    worst = std::max(worst, detail::relative_l2(a.data, b.data));
  }
  std::ostringstream os;
  os << inputs << " inputs, worst relative L2 " << worst << " (limit 2e-2)";
  return {"f16", worst < 2e-2, os.str()};
}

}  // namespace rtstt
