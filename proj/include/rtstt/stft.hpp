#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "rtstt/audio.hpp"
#include "rtstt/fft.hpp"
#include "rtstt/tensor.hpp"

// Causal STFT analysis and weighted overlap-add synthesis.
//
// Frame k windows samples [k*hop - (window - hop), k*hop + hop): it only
// needs input up to the end of hop k, and samples before the stream start
// read as zeros (or as the carried analysis tail when streaming).
//
// Synthesis multiplies by the analysis window again and divides by the
// summed squared window of the frames covering each sample. With a periodic
// Hann window at hop = window/2 that sum is sin^4 + cos^4, periodic in hop
// and never below 1/2, so the division is always well conditioned.
namespace rtstt {

struct StftConfig {
  std::size_t window_len = 1024;
  std::size_t hop = 512;
  std::size_t f_kept = 384;

  std::size_t f_full() const { return window_len / 2 + 1; }

  void validate() const {
    if (window_len < 4 || (window_len & (window_len - 1)) != 0) {
      throw std::invalid_argument("STFT window must be a power of two");
    }
    if (hop * 2 != window_len) throw std::invalid_argument("STFT hop must be half the window");
    if (f_kept == 0 || f_kept > f_full()) {
      throw std::invalid_argument("kept bins must be in [1, " + std::to_string(f_full()) + "]");
    }
  }
};

inline std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

/// Real-valued spectrogram, (C, F, T) with C = 2 * audio channels: real
/// parts in channels [0, C/2), imaginary parts in [C/2, C).
struct Spectrogram {
  Tensor<float> data;

  std::size_t audio_channels() const { return data.dim(0) / 2; }
  std::size_t bins() const { return data.dim(1); }
  std::size_t frames() const { return data.dim(2); }
};

/// Full-band complex frames, laid out (channels, frames, bins).
struct ComplexFrames {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;

  std::complex<double>* frame(std::size_t ch, std::size_t t) { return data.data() + (ch * frames + t) * bins; }
  const std::complex<double>* frame(std::size_t ch, std::size_t t) const {
    return data.data() + (ch * frames + t) * bins;
  }
};

/// Streaming carry for analysis and synthesis. Tails start as zeros and are
/// sized on first use.
struct OlaState {
  std::vector<std::vector<float>> analysis_tail;    // per channel, window - hop samples
  std::vector<std::vector<double>> synthesis_tail;  // per channel, window - hop pending sums
};

/// Shared machinery for both the offline transforms and the streaming engine;
/// every frame goes through the same arithmetic regardless of caller.
class StftKernel {
 public:
  explicit StftKernel(const StftConfig& cfg) : cfg_(cfg), fft_(cfg.window_len), window_(periodic_hann(cfg.window_len)),
                                               inv_envelope_(cfg.hop), buf_(cfg.window_len) {
    cfg.validate();
    for (std::size_t r = 0; r < cfg.hop; ++r) {
      const double a = window_[r], b = window_[r + cfg.hop];
      inv_envelope_[r] = 1.0 / (a * a + b * b);
    }
  }

  const StftConfig& config() const { return cfg_; }
  const std::vector<double>& window() const { return window_; }

  /// Spectrum of one frame; `samples` holds window_len samples.
  void analyze(const float* samples, std::complex<double>* bins) {
    for (std::size_t i = 0; i < cfg_.window_len; ++i) buf_[i] = {samples[i] * window_[i], 0.0};
    fft_.forward(buf_.data());
    std::copy_n(buf_.data(), cfg_.f_full(), bins);
  }

  /// Synthesizes one frame and overlap-adds it into `pending` (hop values),
  /// writing the hop that just became final into `out`.
  void synthesize(const std::complex<double>* bins, std::vector<double>& pending, float* out) {
    const std::size_t n = cfg_.window_len, hop = cfg_.hop, nf = cfg_.f_full();
    for (std::size_t k = 0; k < nf; ++k) buf_[k] = bins[k];
    buf_[0] = {buf_[0].real(), 0.0};
    buf_[nf - 1] = {buf_[nf - 1].real(), 0.0};
    for (std::size_t k = nf; k < n; ++k) buf_[k] = std::conj(buf_[n - k]);
    fft_.inverse(buf_.data());
    for (std::size_t r = 0; r < hop; ++r) {
      out[r] = static_cast<float>((pending[r] + buf_[r].real() * window_[r]) * inv_envelope_[r]);
      pending[r] = buf_[r + hop].real() * window_[r + hop];
    }
  }

  /// Finalizes a trailing pending hop that no later frame will overlap.
  void finish(const std::vector<double>& pending, float* out) const {
    for (std::size_t r = 0; r < cfg_.hop; ++r) {
      const double w = window_[r + cfg_.hop];
      out[r] = static_cast<float>(pending[r] / (w * w));
    }
  }

 private:
  StftConfig cfg_;
  Fft fft_;
  std::vector<double> window_;
  std::vector<double> inv_envelope_;
  std::vector<std::complex<double>> buf_;
};

/// Analyses `frames` frames of `audio` into frame-major (T, 1, 2*C0, F_kept)
/// float layout. `tails` supplies the window-hop samples preceding the audio
/// and is advanced; audio shorter than frames*hop reads zeros past its end.
inline Tensor<float> analyze_frames(StftKernel& kernel, const AudioChunk& audio, std::size_t frames,
                                    std::vector<std::vector<float>>& tails) {
  const StftConfig& cfg = kernel.config();
  const std::size_t c0 = audio.channel_count();
  const std::size_t lead = cfg.window_len - cfg.hop;
  const std::size_t F = cfg.f_kept;
  if (tails.size() != c0) tails.assign(c0, std::vector<float>(lead, 0.0f));

  Tensor<float> out({frames, 1, 2 * c0, F});
  std::vector<float> extended;
  std::vector<float> window(cfg.window_len);
  std::vector<std::complex<double>> bins(cfg.f_full());
  for (std::size_t ch = 0; ch < c0; ++ch) {
    const auto& src = audio.channels[ch];
    extended.assign(lead + frames * cfg.hop, 0.0f);
    std::copy(tails[ch].begin(), tails[ch].end(), extended.begin());
    std::copy_n(src.begin(), std::min(src.size(), frames * cfg.hop), extended.begin() + lead);
    for (std::size_t k = 0; k < frames; ++k) {
      kernel.analyze(extended.data() + k * cfg.hop, bins.data());
      float* re = out.data().data() + (k * 2 * c0 + ch) * F;
      float* im = out.data().data() + (k * 2 * c0 + c0 + ch) * F;
      for (std::size_t f = 0; f < F; ++f) {
        re[f] = static_cast<float>(bins[f].real());
        im[f] = static_cast<float>(bins[f].imag());
      }
    }
    std::copy(extended.end() - static_cast<std::ptrdiff_t>(lead), extended.end(), tails[ch].begin());
  }
  return out;
}

/// Rebuilds full-band complex bins from kept-band real/imag planes, zeroing
/// the bins that were cut.
inline void restore_bins(const float* re, const float* im, std::size_t f_kept, std::size_t f_full,
                         std::complex<double>* out) {
  for (std::size_t f = 0; f < f_kept; ++f) out[f] = {re[f], im[f]};
  for (std::size_t f = f_kept; f < f_full; ++f) out[f] = {0.0, 0.0};
}

/// Causal STFT of `audio`. With `state` the call is one step of a stream:
/// the length must be a multiple of hop and the analysis tail is carried.
/// Without it, the tail of the audio is zero-padded to a whole hop.
inline Spectrogram stft_forward(const AudioChunk& audio, const StftConfig& cfg, OlaState* state = nullptr) {
  cfg.validate();
  audio.validate();
  const std::size_t L = audio.length();
  if (audio.channel_count() == 0 || L == 0) throw std::invalid_argument("stft_forward needs audio");
  if (state != nullptr && L % cfg.hop != 0) {
    throw std::invalid_argument("streaming STFT input length must be a multiple of hop");
  }
  const std::size_t frames = (L + cfg.hop - 1) / cfg.hop;
  StftKernel kernel(cfg);
  std::vector<std::vector<float>> local;
  auto& tails = state ? state->analysis_tail : local;
  const Tensor<float> fm = analyze_frames(kernel, audio, frames, tails);

  const std::size_t C = fm.dim(2), F = fm.dim(3);
  Spectrogram spec{Tensor<float>({C, F, frames})};
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f) spec.data[(c * F + f) * frames + t] = fm[(t * C + c) * F + f];
  return spec;
}

inline ComplexFrames band_restore(const Spectrogram& spec, std::size_t f_full) {
  const std::size_t c0 = spec.audio_channels(), F = spec.bins(), T = spec.frames();
  if (F > f_full) throw std::invalid_argument("spectrogram has more bins than the full band");
  ComplexFrames out{c0, T, f_full, std::vector<std::complex<double>>(c0 * T * f_full)};
  std::vector<float> re(F), im(F);
  for (std::size_t ch = 0; ch < c0; ++ch) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) {
        re[f] = spec.data[(ch * F + f) * T + t];
        im[f] = spec.data[((c0 + ch) * F + f) * T + t];
      }
      restore_bins(re.data(), im.data(), F, f_full, out.frame(ch, t));
    }
  }
  return out;
}

/// Inverse STFT by weighted overlap-add.
///
/// Streaming (with `state`): each frame emits the hop that its arrival made
/// final, so the output runs window-hop samples behind the analysis frames
/// (the first hop of a fresh stream covers the zero lead-in).
/// Offline (no state): returns exactly frames*hop samples aligned with the
/// analysed input; the last hop, which no later frame overlaps, is
/// normalized by the single window that covers it.
inline AudioChunk istft_overlap_add(const ComplexFrames& frames, const StftConfig& cfg,
                                    OlaState* state = nullptr, std::uint32_t sample_rate = 44100) {
  cfg.validate();
  if (frames.bins != cfg.f_full()) throw std::invalid_argument("istft expects full-band frames");
  StftKernel kernel(cfg);
  const std::size_t hop = cfg.hop;
  std::vector<std::vector<double>> local;
  auto& pending = state ? state->synthesis_tail : local;
  if (pending.size() != frames.channels) pending.assign(frames.channels, std::vector<double>(hop, 0.0));

  AudioChunk out{sample_rate, std::vector<std::vector<float>>(frames.channels)};
  std::vector<float> block(hop);
  for (std::size_t ch = 0; ch < frames.channels; ++ch) {
    auto& dst = out.channels[ch];
    dst.reserve((frames.frames + 1) * hop);
    for (std::size_t t = 0; t < frames.frames; ++t) {
      kernel.synthesize(frames.frame(ch, t), pending[ch], block.data());
      dst.insert(dst.end(), block.begin(), block.end());
    }
    if (state == nullptr) {
      kernel.finish(pending[ch], block.data());
      dst.insert(dst.end(), block.begin(), block.end());
      dst.erase(dst.begin(), dst.begin() + static_cast<std::ptrdiff_t>(cfg.window_len - hop));
    }
  }
  return out;
}

}  // namespace rtstt
