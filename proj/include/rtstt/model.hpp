#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "rtstt/config.hpp"
#include "rtstt/kernels.hpp"
#include "rtstt/stft.hpp"
#include "rtstt/weights.hpp"

namespace rtstt {

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Medium TFC-TDF block: TFC (two conv/norm/GELU stages), residual TDF
/// bottleneck over frequency, second TFC, plus a single-conv residual path.
struct TfcTdfBlock {
  Conv2d tfc1_conv1, tfc1_conv2, tfc2_conv1, tfc2_conv2, residual;
  Norm tfc1_norm1, tfc1_norm2, tfc2_norm1, tfc2_norm2;
  Linear tdf_fc1, tdf_fc2;

  std::size_t channels() const { return residual.spec.in_channels; }
  std::size_t bottleneck() const { return tdf_fc1.out_features; }
};

/// Conv histories, one per causal conv of a block, in the order
/// tfc1_conv1, tfc1_conv2, tfc2_conv1, tfc2_conv2, residual.
template <Scalar T>
struct TfcTdfState {
  std::array<Tensor<T>, 5> history;

  static TfcTdfState zeros(std::size_t batch, std::size_t channels, std::size_t freq) {
    TfcTdfState s;
    for (auto& h : s.history) h = Tensor<T>({2, batch, channels, freq});
    return s;
  }
};

/// norm -> LSTM -> linear back to the input width, with a residual around it.
struct RnnBlock {
  Norm norm;
  Lstm lstm;
  Linear fc;
};

/// Two RNN blocks. The single-path module runs both over time; the
/// dual-path module runs the second over frequency instead.
struct PathModule {
  RnnBlock first;
  RnnBlock second;
};

template <Scalar T>
struct PathState {
  LstmState<T> first;
  LstmState<T> second;  // unused by the dual-path module
};

namespace detail {

template <Scalar T>
Tensor<T> conv_norm_gelu(const Tensor<T>& x, const Conv2d& conv, const Norm& norm, Tensor<T>* hist) {
  return gelu(causal_norm(conv2d_causal(x, conv, hist), norm));
}

}  // namespace detail

template <Scalar T>
Tensor<T> medium_tfc_tdf(const Tensor<T>& x, const TfcTdfBlock& blk, TfcTdfState<T>* st = nullptr) {
  auto hist = [&](std::size_t i) { return st ? &st->history[i] : nullptr; };
  Tensor<T> y = detail::conv_norm_gelu(x, blk.tfc1_conv1, blk.tfc1_norm1, hist(0));
  y = detail::conv_norm_gelu(y, blk.tfc1_conv2, blk.tfc1_norm2, hist(1));
  const Tensor<T> tdf = linear(gelu(linear(y, blk.tdf_fc1)), blk.tdf_fc2);
  add_inplace(y, tdf);
  y = detail::conv_norm_gelu(y, blk.tfc2_conv1, blk.tfc2_norm1, hist(2));
  y = detail::conv_norm_gelu(y, blk.tfc2_conv2, blk.tfc2_norm2, hist(3));
  add_inplace(y, conv2d_causal(x, blk.residual, hist(4)));
  return y;
}

/// RNN block iterating over time with one LSTM sequence per frequency bin.
/// Input (T, 1, C, F); the carry holds (F, H) hidden and cell states.
template <Scalar T>
Tensor<T> rnn_over_time(const Tensor<T>& x, const RnnBlock& blk, LstmState<T>& st) {
  detail::require(x.rank() == 4 && x.dim(1) == 1, "rnn block input must be (T,1,C,F)");
  const std::size_t frames = x.dim(0), C = x.dim(2), F = x.dim(3), H = blk.lstm.spec.hidden_size;
  detail::require(blk.lstm.spec.input_size == C && blk.fc.out_features == C, "rnn block width mismatch");
  detail::require(st.h.shape() == Shape{F, H} && st.c.shape() == Shape{F, H}, "rnn carry shape mismatch");

  const Tensor<T> normed = causal_norm(x, blk.norm);
  const detail::FloatData<T> n(normed.data()), xin(x.data());
  const detail::FloatData<T> h0(st.h.data()), c0(st.c.data());
  std::vector<float> h(h0.data(), h0.data() + F * H), cell(c0.data(), c0.data() + F * H);

  Tensor<T> out(x.shape());
  detail::FloatSink<T> sink(out);
  std::vector<float> rows(F * C), y(F * C), gates;
  for (std::size_t t = 0; t < frames; ++t) {
    const float* nf = n.data() + t * C * F;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f) rows[f * C + c] = nf[c * F + f];
    detail::lstm_step(rows.data(), F, blk.lstm, h.data(), cell.data(), gates);
    if constexpr (!std::is_same_v<T, float>) {
      round_to_half(h);
      round_to_half(cell);
    }
    detail::linear_rows(h.data(), F, blk.fc, y.data());
    const float* xf = xin.data() + t * C * F;
    float* of = sink.data() + t * C * F;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f) of[c * F + f] = xf[c * F + f] + y[f * C + c];
  }
  sink.commit();
  for (std::size_t i = 0; i < F * H; ++i) {
    st.h[i] = from_f32<T>(h[i]);
    st.c[i] = from_f32<T>(cell[i]);
  }
  return out;
}

/// RNN block iterating over frequency within each frame (the reordered
/// half of a dual-path module). Each frame starts from a zero state, so it
/// carries nothing across time.
template <Scalar T>
Tensor<T> rnn_over_freq(const Tensor<T>& x, const RnnBlock& blk) {
  detail::require(x.rank() == 4 && x.dim(1) == 1, "rnn block input must be (T,1,C,F)");
  const std::size_t frames = x.dim(0), C = x.dim(2), F = x.dim(3), H = blk.lstm.spec.hidden_size;
  detail::require(blk.lstm.spec.input_size == C && blk.fc.out_features == C, "rnn block width mismatch");

  const Tensor<T> normed = causal_norm(x, blk.norm);
  const detail::FloatData<T> n(normed.data()), xin(x.data());
  Tensor<T> out(x.shape());
  detail::FloatSink<T> sink(out);
  std::vector<float> rows(F * C), hidden(F * H), y(F * C), h(H), cell(H), gates;
  for (std::size_t t = 0; t < frames; ++t) {
    const float* nf = n.data() + t * C * F;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f) rows[f * C + c] = nf[c * F + f];
    std::fill(h.begin(), h.end(), 0.0f);
    std::fill(cell.begin(), cell.end(), 0.0f);
    for (std::size_t f = 0; f < F; ++f) {
      detail::lstm_step(rows.data() + f * C, 1, blk.lstm, h.data(), cell.data(), gates);
      if constexpr (!std::is_same_v<T, float>) {
        round_to_half(h);
        round_to_half(cell);
      }
      std::copy(h.begin(), h.end(), hidden.begin() + f * H);
    }
    detail::linear_rows(hidden.data(), F, blk.fc, y.data());
    const float* xf = xin.data() + t * C * F;
    float* of = sink.data() + t * C * F;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f) of[c * F + f] = xf[c * F + f] + y[f * C + c];
  }
  sink.commit();
  return out;
}

template <Scalar T>
Tensor<T> single_path_module(const Tensor<T>& x, const PathModule& m, PathState<T>& st) {
  return rnn_over_time(rnn_over_time(x, m.first, st.first), m.second, st.second);
}

template <Scalar T>
Tensor<T> dual_path_module(const Tensor<T>& x, const PathModule& m, PathState<T>& st) {
  return rnn_over_freq(rnn_over_time(x, m.first, st.first), m.second);
}

/// Width-changing decoder conv on (T, S, C, F). A groups=1 conv mixes all
/// sources (joint fusion); groups=S keeps each source's channels separate.
template <Scalar T>
Tensor<T> decoder_fusion(const Tensor<T>& x, const Conv2d& conv) {
  detail::require(x.rank() == 4, "decoder fusion input must be (T,S,C,F)");
  const std::size_t frames = x.dim(0), S = x.dim(1), F = x.dim(3);
  detail::require(conv.spec.in_channels == S * x.dim(2) && conv.spec.out_channels % S == 0,
                  "decoder fusion conv does not match source layout");
  Tensor<T> folded = x;
  folded.reshape({frames, 1, S * x.dim(2), F});
  Tensor<T> y = pointwise_conv(folded, conv);
  y.reshape({frames, S, conv.spec.out_channels / S, F});
  return y;
}

// ---------------------------------------------------------------------------
// Whole network
// ---------------------------------------------------------------------------

template <Scalar T>
struct ModelStateT {
  std::vector<TfcTdfState<T>> enc;
  TfcTdfState<T> latent;
  std::vector<PathState<T>> paths;
  std::vector<TfcTdfState<T>> dec;  // indexed by depth, like enc
};

/// Optional probe into intermediate activations.
struct ForwardTrace {
  Tensor<float> source_softmax;  // (T, S, C_latent, F), after the source softmax
};

class ModelGraph {
 public:
  /// All causal carry for one stream.
  class State {
   public:
    DType dtype() const { return v_.index() == 0 ? DType::F32 : DType::F16; }

   private:
    friend class ModelGraph;
    std::variant<ModelStateT<float>, ModelStateT<Half>> v_;
  };

  static ModelGraph build(const WeightSet& ws) {
    check_consistent(ws);
    ModelGraph m;
    m.cfg_ = ws.config;
    m.params_ = ws.parameter_count();
    const ModelConfig& c = m.cfg_;
    auto vals = [&](const std::string& name) { return ws.get(name).values(); };
    auto conv = [&](const std::string& p, const ConvSpec& s) {
      return Conv2d{s, vals(p + ".weight"), vals(p + ".bias")};
    };
    auto norm = [&](const std::string& p) { return Norm{vals(p + ".gain"), vals(p + ".offset")}; };
    auto lin = [&](const std::string& p) {
      const auto& e = ws.get(p + ".weight");
      return Linear::from_rows(e.shape[1], e.shape[0], e.values(), vals(p + ".bias"));
    };
    auto block = [&](const std::string& p, std::size_t ch) {
      const ConvSpec k3{ch, ch, 3, 3, 1};
      TfcTdfBlock b;
      b.tfc1_conv1 = conv(p + ".tfc1.conv1", k3);
      b.tfc1_norm1 = norm(p + ".tfc1.norm1");
      b.tfc1_conv2 = conv(p + ".tfc1.conv2", k3);
      b.tfc1_norm2 = norm(p + ".tfc1.norm2");
      b.tdf_fc1 = lin(p + ".tdf.fc1");
      b.tdf_fc2 = lin(p + ".tdf.fc2");
      b.tfc2_conv1 = conv(p + ".tfc2.conv1", k3);
      b.tfc2_norm1 = norm(p + ".tfc2.norm1");
      b.tfc2_conv2 = conv(p + ".tfc2.conv2", k3);
      b.tfc2_norm2 = norm(p + ".tfc2.norm2");
      b.residual = conv(p + ".residual", k3);
      return b;
    };
    auto rnn = [&](const std::string& p) {
      const auto& wih = ws.get(p + ".lstm.w_ih");
      const LstmSpec spec{wih.shape[1], wih.shape[0] / 4};
      return RnnBlock{norm(p + ".norm"),
                      Lstm::from_rows(spec, wih.values(), vals(p + ".lstm.w_hh"), vals(p + ".lstm.bias")),
                      lin(p + ".fc")};
    };

    const std::size_t S = c.sources;
    m.enc_in_ = conv("enc_in", {c.spec_channels(), c.g, 1, 1, 1});
    for (std::size_t i = 0; i < c.layers; ++i) {
      const std::string p = "enc" + std::to_string(i);
      const std::size_t w = c.width_at(i);
      m.enc_.push_back({block(p + ".block", w), conv(p + ".down", {w, 2 * w, 1, 1, 1})});
    }
    const std::size_t lw = c.latent_width();
    m.latent_ = block("latent.block", lw);
    for (std::size_t j = 0; j < c.l_repeats; ++j) {
      const std::string p = "latent.path" + std::to_string(j);
      m.paths_.push_back({rnn(p + ".rnn0"), rnn(p + ".rnn1")});
    }
    m.expand_ = conv("latent.expand", {lw, S * lw, 1, 1, 1});
    for (std::size_t i = 0; i < c.layers; ++i) {
      const std::string p = "dec" + std::to_string(i);
      m.dec_.push_back({conv(p + ".up", decoder_fusion_spec(c, i)), block(p + ".block", c.width_at(i))});
    }
    m.dec_out_ = conv("dec_out", {S * c.g, S * c.spec_channels(), 1, 1, S});
    return m;
  }

  /// Seeded random weights; an F16 config gets them rounded to binary16.
  static ModelGraph random(const ModelConfig& config, std::uint64_t seed) {
    WeightSet ws = random_init(config, seed);
    if (config.dtype == DType::F16) ws = to_f16(ws);
    return build(ws);
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t parameter_count() const { return params_; }

  State new_state() const {
    State s;
    if (cfg_.dtype == DType::F32) {
      s.v_ = make_state<float>();
    } else {
      s.v_ = make_state<Half>();
    }
    return s;
  }

  /// Runs frames (T, 1, 2*c0, F) through the network, continuing from
  /// `state`, and returns per-source estimates (T, S, 2*c0, F). Splitting a
  /// sequence across calls gives bit-identical results to one call.
  Tensor<float> forward_frames(const Tensor<float>& frames, State& state, ForwardTrace* trace = nullptr) const {
    detail::require(frames.rank() == 4 && frames.dim(1) == 1 && frames.dim(2) == cfg_.spec_channels() &&
                        frames.dim(3) == cfg_.f_kept,
                    "model input " + shape_string(frames.shape()) + " does not match config");
    detail::require(state.dtype() == cfg_.dtype, "stream state dtype does not match model");
    if (cfg_.dtype == DType::F32) return run(frames, std::get<0>(state.v_), trace);
    return cast<float>(run(cast<Half>(frames), std::get<1>(state.v_), trace));
  }

  /// Whole-sequence forward from a fresh state: (C, F, T) in,
  /// (S, C, F, T) out.
  Tensor<float> forward(const Spectrogram& spec, ForwardTrace* trace = nullptr) const {
    const std::size_t C = spec.data.dim(0), F = spec.data.dim(1), T = spec.data.dim(2);
    detail::require(C == cfg_.spec_channels() && F == cfg_.f_kept, "spectrogram does not match config");
    Tensor<float> frames({T, 1, C, F});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t t = 0; t < T; ++t) frames[(t * C + c) * F + f] = spec.data[(c * F + f) * T + t];
    State st = new_state();
    const Tensor<float> y = forward_frames(frames, st, trace);
    const std::size_t S = cfg_.sources;
    Tensor<float> out({S, C, F, T});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t f = 0; f < F; ++f)
            out[((s * C + c) * F + f) * T + t] = y[((t * S + s) * C + c) * F + f];
    return out;
  }

  // Component access for block-level tests and diagnostics.
  const TfcTdfBlock& latent_block() const { return latent_; }
  const std::vector<PathModule>& path_modules() const { return paths_; }
  const Conv2d& decoder_conv(std::size_t depth) const { return dec_.at(depth).up; }

 private:
  struct EncoderLevel {
    TfcTdfBlock block;
    Conv2d down;
  };
  struct DecoderLevel {
    Conv2d up;
    TfcTdfBlock block;
  };

  template <Scalar T>
  ModelStateT<T> make_state() const {
    ModelStateT<T> s;
    const std::size_t F = cfg_.f_kept, S = cfg_.sources, H = cfg_.hidden();
    for (std::size_t i = 0; i < cfg_.layers; ++i) {
      s.enc.push_back(TfcTdfState<T>::zeros(1, cfg_.width_at(i), F));
      s.dec.push_back(TfcTdfState<T>::zeros(S, cfg_.width_at(i), F));
    }
    s.latent = TfcTdfState<T>::zeros(1, cfg_.latent_width(), F);
    for (std::size_t j = 0; j < cfg_.l_repeats; ++j)
      s.paths.push_back({LstmState<T>::zeros(F, H), LstmState<T>::zeros(F, H)});
    return s;
  }

  template <Scalar T>
  Tensor<T> run(const Tensor<T>& x, ModelStateT<T>& st, ForwardTrace* trace) const {
    const std::size_t frames = x.dim(0), F = cfg_.f_kept, S = cfg_.sources;
    Tensor<T> h = pointwise_conv(x, enc_in_);
    std::vector<Tensor<T>> pre, post;
    for (std::size_t i = 0; i < cfg_.layers; ++i) {
      pre.push_back(h);
      h = medium_tfc_tdf(h, enc_[i].block, &st.enc[i]);
      post.push_back(h);
      h = pointwise_conv(h, enc_[i].down);
    }
    h = medium_tfc_tdf(h, latent_, &st.latent);
    for (std::size_t j = 0; j < paths_.size(); ++j) {
      h = cfg_.path_mode == PathMode::Single ? single_path_module(h, paths_[j], st.paths[j])
                                             : dual_path_module(h, paths_[j], st.paths[j]);
    }
    h = pointwise_conv(h, expand_);
    h.reshape({frames, S, cfg_.latent_width(), F});
    h = softmax_over_axis(h, 1);
    if (trace) trace->source_softmax = cast<float>(h);
    for (std::size_t i = cfg_.layers; i-- > 0;) {
      h = decoder_fusion(h, dec_[i].up);
      multiply_broadcast(h, post[i]);
      h = medium_tfc_tdf(h, dec_[i].block, &st.dec[i]);
      multiply_broadcast(h, pre[i]);
    }
    h.reshape({frames, 1, S * cfg_.g, F});
    h = pointwise_conv(h, dec_out_);
    h.reshape({frames, S, cfg_.spec_channels(), F});
    return h;
  }

  ModelConfig cfg_;
  std::size_t params_ = 0;
  Conv2d enc_in_;
  std::vector<EncoderLevel> enc_;
  TfcTdfBlock latent_;
  std::vector<PathModule> paths_;
  Conv2d expand_;
  std::vector<DecoderLevel> dec_;
  Conv2d dec_out_;
};

inline std::size_t parameter_count(const ModelGraph& m) { return m.parameter_count(); }

}  // namespace rtstt
