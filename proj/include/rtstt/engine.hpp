#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rtstt/model.hpp"
#include "rtstt/pipeline.hpp"
#include "rtstt/stft.hpp"

namespace rtstt {

/// Real-time separation stream over a shared, immutable model.
///
/// Input arrives in blocks of any size; whole hops are processed as soon as
/// they are complete. Output trails input by exactly latency_samples():
/// after any push, samples_out() == max(0, processed - latency), and the
/// emitted samples match the offline pipeline sample for sample.
class Stream {
 public:
  explicit Stream(const ModelGraph& model)
      : model_(&model), kernel_(model.config().stft()), state_(model.new_state()) {
    reset();
  }

  std::size_t latency_samples() const { return model_->config().latency_samples(); }
  std::size_t samples_in() const { return samples_in_; }
  std::size_t samples_out() const { return samples_out_; }
  std::size_t frames_processed() const { return frames_; }
  bool flushed() const { return flushed_; }
  const ModelGraph& model() const { return *model_; }

  void reset() {
    const ModelConfig& cfg = model_->config();
    const std::size_t hop = cfg.hop, lead = cfg.window - cfg.hop;
    state_ = model_->new_state();
    pending_.assign(cfg.c0, {});
    tails_.assign(cfg.c0, std::vector<float>(lead, 0.0f));
    synth_.assign(cfg.sources * cfg.c0, std::vector<double>(hop, 0.0));
    ready_.assign(cfg.sources * cfg.c0, {});
    preroll_ = lead;
    samples_in_ = samples_out_ = processed_ = frames_ = 0;
    flushed_ = false;
  }

  /// Accepts `audio` and returns every source sample that became due.
  SourceAudio push(const AudioChunk& audio) {
    if (flushed_) throw std::logic_error("stream was flushed; reset it before pushing again");
    detail::check_audio_for(model_->config(), audio);
    for (std::size_t ch = 0; ch < audio.channel_count(); ++ch)
      pending_[ch].insert(pending_[ch].end(), audio.channels[ch].begin(), audio.channels[ch].end());
    samples_in_ += audio.length();
    run_pending();
    const std::size_t lat = latency_samples();
    return emit(processed_ > lat ? processed_ - lat : 0);
  }

  /// Drains the stream: zero-pads past the end of the input so every
  /// remaining sample is final, then emits until samples_out() equals
  /// samples_in(). The stream needs reset() afterwards.
  SourceAudio flush() {
    if (flushed_) throw std::logic_error("stream already flushed");
    flushed_ = true;
    const ModelConfig& cfg = model_->config();
    const std::size_t rem = pending_.front().size();
    const std::size_t padded = (rem + cfg.hop - 1) / cfg.hop * cfg.hop + cfg.window;
    for (auto& p : pending_) p.resize(padded, 0.0f);
    run_pending();
    return emit(samples_in_);
  }

 private:
  void run_pending() {
    const ModelConfig& cfg = model_->config();
    const std::size_t hop = cfg.hop, n = pending_.front().size() / hop;
    if (n == 0) return;
    AudioChunk block{cfg.sample_rate, std::vector<std::vector<float>>(cfg.c0)};
    for (std::size_t ch = 0; ch < cfg.c0; ++ch) {
      block.channels[ch].assign(pending_[ch].begin(), pending_[ch].begin() + static_cast<std::ptrdiff_t>(n * hop));
      pending_[ch].erase(pending_[ch].begin(), pending_[ch].begin() + static_cast<std::ptrdiff_t>(n * hop));
    }
    const Tensor<float> frames = analyze_frames(kernel_, block, n, tails_);
    const Tensor<float> y = model_->forward_frames(frames, state_);  // (n, S, C, F)

    const std::size_t S = cfg.sources, c0 = cfg.c0, C = 2 * c0, F = cfg.f_kept, nf = cfg.stft().f_full();
    std::vector<std::complex<double>> bins(nf);
    std::vector<float> out(hop);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t ch = 0; ch < c0; ++ch) {
          const float* re = y.data().data() + ((t * S + s) * C + ch) * F;
          const float* im = y.data().data() + ((t * S + s) * C + c0 + ch) * F;
          restore_bins(re, im, F, nf, bins.data());
          kernel_.synthesize(bins.data(), synth_[s * c0 + ch], out.data());
          const std::size_t skip = std::min(preroll_, hop);
          ready_[s * c0 + ch].insert(ready_[s * c0 + ch].end(), out.begin() + static_cast<std::ptrdiff_t>(skip),
                                     out.end());
        }
      }
      preroll_ -= std::min(preroll_, hop);
    }
    processed_ += n * hop;
    frames_ += n;
  }

  SourceAudio emit(std::size_t target) {
    const ModelConfig& cfg = model_->config();
    const std::size_t m = target > samples_out_ ? target - samples_out_ : 0;
    SourceAudio out = SourceAudio::zeros(cfg.sources, cfg.c0, m);
    if (m == 0) return out;
    for (std::size_t s = 0; s < cfg.sources; ++s) {
      for (std::size_t ch = 0; ch < cfg.c0; ++ch) {
        auto& r = ready_[s * cfg.c0 + ch];
        std::copy_n(r.begin(), m, out.row(s, ch));
        r.erase(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(m));
      }
    }
    samples_out_ += m;
    return out;
  }

  const ModelGraph* model_;
  StftKernel kernel_;
  ModelGraph::State state_;
  std::vector<std::vector<float>> pending_;  // per channel, fewer than hop samples between calls
  std::vector<std::vector<float>> tails_;    // analysis lookback
  std::vector<std::vector<double>> synth_;   // per (source, channel) overlap-add carry
  std::vector<std::vector<float>> ready_;    // final but not yet due
  std::size_t preroll_ = 0;
  std::size_t samples_in_ = 0, samples_out_ = 0, processed_ = 0, frames_ = 0;
  bool flushed_ = false;
};

}  // namespace rtstt
