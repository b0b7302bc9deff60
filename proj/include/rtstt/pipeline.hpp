#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "rtstt/audio.hpp"
#include "rtstt/model.hpp"
#include "rtstt/stft.hpp"

namespace rtstt {

/// Per-source audio, laid out (sources, channels, samples). `samples` may
/// be zero, e.g. for a push that finalized nothing yet.
struct SourceAudio {
  std::size_t sources = 0;
  std::size_t channels = 0;
  std::size_t samples = 0;
  std::vector<float> data;

  static SourceAudio zeros(std::size_t s, std::size_t c, std::size_t m) {
    return {s, c, m, std::vector<float>(s * c * m, 0.0f)};
  }

  float* row(std::size_t s, std::size_t ch) { return data.data() + (s * channels + ch) * samples; }
  const float* row(std::size_t s, std::size_t ch) const { return data.data() + (s * channels + ch) * samples; }

  AudioChunk source(std::size_t s, std::uint32_t sample_rate = 44100) const {
    AudioChunk a{sample_rate, std::vector<std::vector<float>>(channels)};
    for (std::size_t ch = 0; ch < channels; ++ch) a.channels[ch].assign(row(s, ch), row(s, ch) + samples);
    return a;
  }

  /// Appends `other` along the sample axis.
  void append(const SourceAudio& other) {
    if (other.samples == 0) return;
    if (samples == 0 && data.empty()) {
      *this = other;
      return;
    }
    if (other.sources != sources || other.channels != channels)
      throw std::invalid_argument("cannot append source audio of a different layout");
    SourceAudio joined = zeros(sources, channels, samples + other.samples);
    for (std::size_t s = 0; s < sources; ++s)
      for (std::size_t ch = 0; ch < channels; ++ch) {
        std::copy_n(row(s, ch), samples, joined.row(s, ch));
        std::copy_n(other.row(s, ch), other.samples, joined.row(s, ch) + samples);
      }
    *this = std::move(joined);
  }
};

namespace detail {

inline void check_audio_for(const ModelConfig& cfg, const AudioChunk& audio) {
  audio.validate();
  if (audio.channel_count() != cfg.c0)
    throw std::invalid_argument("expected " + std::to_string(cfg.c0) + " audio channels, got " +
                                std::to_string(audio.channel_count()));
  if (audio.sample_rate != cfg.sample_rate)
    throw std::invalid_argument("sample rate " + std::to_string(audio.sample_rate) + " does not match model rate " +
                                std::to_string(cfg.sample_rate));
}

}  // namespace detail

/// Offline separation of a whole track: STFT, one forward pass over every
/// frame, inverse STFT, trimmed back to the input length. The input is
/// padded with zeros so every kept sample has its full overlap-add.
inline SourceAudio separate(const ModelGraph& model, const AudioChunk& audio) {
  const ModelConfig& cfg = model.config();
  detail::check_audio_for(cfg, audio);
  const StftConfig sc = cfg.stft();
  const std::size_t L = audio.length();
  const std::size_t padded = (L + sc.hop - 1) / sc.hop * sc.hop + sc.window_len;
  AudioChunk in = audio;
  for (auto& ch : in.channels) ch.resize(padded, 0.0f);

  const Spectrogram spec = stft_forward(in, sc);
  const Tensor<float> y = model.forward(spec);  // (S, C, F, T)
  const std::size_t S = cfg.sources, C = y.dim(1), F = y.dim(2), T = y.dim(3);

  SourceAudio out = SourceAudio::zeros(S, cfg.c0, L);
  for (std::size_t s = 0; s < S; ++s) {
    Spectrogram one{Tensor<float>({C, F, T})};
    std::copy_n(y.data().data() + s * C * F * T, C * F * T, one.data.data().data());
    const AudioChunk a = istft_overlap_add(band_restore(one, sc.f_full()), sc, nullptr, cfg.sample_rate);
    for (std::size_t ch = 0; ch < cfg.c0; ++ch) std::copy_n(a.channels[ch].begin(), L, out.row(s, ch));
  }
  return out;
}

}  // namespace rtstt
