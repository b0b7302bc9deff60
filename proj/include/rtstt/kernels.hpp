#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "rtstt/detail/fastmath.hpp"
#include "rtstt/detail/gemm.hpp"
#include "rtstt/tensor.hpp"

// Dense inference kernels. Feature maps are frame-major (T, B, C, F): T time
// frames, B independent sub-batches sharing one set of weights (the decoder
// runs each source as a sub-batch), C channels, F frequency bins.
//
// Weights are always held in float. The F16 path stores weights that are
// exactly representable in binary16 and rounds every activation to binary16,
// while all accumulation happens in float.
namespace rtstt {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_time = 1;
  std::size_t kernel_freq = 1;
  std::size_t groups = 1;

  void validate() const {
    if (in_channels == 0 || out_channels == 0 || groups == 0) {
      throw ShapeError("conv channel counts and groups must be positive");
    }
    if (kernel_time % 2 == 0 || kernel_freq % 2 == 0) {
      throw ShapeError("conv kernel sizes must be odd");
    }
    if (in_channels % groups != 0 || out_channels % groups != 0) {
      throw ShapeError("conv groups (" + std::to_string(groups) + ") must divide channels " +
                       std::to_string(in_channels) + "->" + std::to_string(out_channels));
    }
  }

  std::size_t fan_in() const { return (in_channels / groups) * kernel_time * kernel_freq; }
  std::size_t weight_count() const { return out_channels * fan_in(); }
  Shape weight_shape() const {
    return {out_channels, in_channels / groups, kernel_time, kernel_freq};
  }
};

struct Conv2d {
  ConvSpec spec;
  std::vector<float> weight;  // (Cout, Cin/groups, kernel_time, kernel_freq)
  std::vector<float> bias;    // (Cout)

  static Conv2d zeros(const ConvSpec& spec) {
    spec.validate();
    return {spec, std::vector<float>(spec.weight_count(), 0.0f),
            std::vector<float>(spec.out_channels, 0.0f)};
  }
};

struct Norm {
  std::vector<float> gain;
  std::vector<float> offset;
  float eps = 1e-5f;

  static Norm identity(std::size_t channels) {
    return {std::vector<float>(channels, 1.0f), std::vector<float>(channels, 0.0f)};
  }
};

struct Linear {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  std::vector<float> weight_t;  // (in, out): transposed for row-major GEMM
  std::vector<float> bias;      // (out)

  /// From a conventional (out, in) weight matrix.
  static Linear from_rows(std::size_t in, std::size_t out, const std::vector<float>& weight,
                          std::vector<float> bias) {
    if (weight.size() != in * out || bias.size() != out) throw ShapeError("linear weight shape");
    Linear lin{in, out, std::vector<float>(in * out), std::move(bias)};
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < in; ++i) lin.weight_t[i * out + o] = weight[o * in + i];
    return lin;
  }
};

struct LstmSpec {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
};

/// Unidirectional LSTM, gate order (input, forget, cell, output).
struct Lstm {
  LstmSpec spec;
  std::vector<float> w_ih_t;  // (input, 4H)
  std::vector<float> w_hh_t;  // (H, 4H)
  std::vector<float> bias;    // (4H)

  /// From (4H, input) and (4H, H) matrices.
  static Lstm from_rows(const LstmSpec& spec, const std::vector<float>& w_ih,
                        const std::vector<float>& w_hh, std::vector<float> bias) {
    const std::size_t g = 4 * spec.hidden_size;
    if (w_ih.size() != g * spec.input_size || w_hh.size() != g * spec.hidden_size ||
        bias.size() != g) {
      throw ShapeError("lstm weight shape");
    }
    Lstm l{spec, std::vector<float>(w_ih.size()), std::vector<float>(w_hh.size()), std::move(bias)};
    for (std::size_t r = 0; r < g; ++r) {
      for (std::size_t i = 0; i < spec.input_size; ++i)
        l.w_ih_t[i * g + r] = w_ih[r * spec.input_size + i];
      for (std::size_t i = 0; i < spec.hidden_size; ++i)
        l.w_hh_t[i * g + r] = w_hh[r * spec.hidden_size + i];
    }
    return l;
  }
};

template <Scalar T>
struct LstmState {
  Tensor<T> h;  // (B, H)
  Tensor<T> c;  // (B, H)

  static LstmState zeros(std::size_t batch, std::size_t hidden) {
    return {Tensor<T>({batch, hidden}), Tensor<T>({batch, hidden})};
  }
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

inline void gelu_inplace(float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = gelu(x[i]);
}

// Causal convolution over float frames. `history` holds the kernel_time-1
// frames preceding frame 0 (same (B, Cin, F) layout), or null for zeros.
inline void conv_frames(const float* x, const float* history, std::size_t frames,
                        std::size_t batch, std::size_t freq, const Conv2d& conv, float* y) {
  const ConvSpec& s = conv.spec;
  const std::size_t cin_g = s.in_channels / s.groups;
  const std::size_t cout_g = s.out_channels / s.groups;
  const std::size_t K = cin_g * s.kernel_time * s.kernel_freq;
  const std::size_t lag = s.kernel_time - 1;
  const std::ptrdiff_t pad_f = static_cast<std::ptrdiff_t>(s.kernel_freq / 2);
  const bool pointwise = s.kernel_time == 1 && s.kernel_freq == 1;

  std::vector<float> cols(pointwise ? 0 : K * freq);
  auto frame_ptr = [&](std::ptrdiff_t j, std::size_t b, std::size_t ch) -> const float* {
    if (j >= 0) return x + ((static_cast<std::size_t>(j) * batch + b) * s.in_channels + ch) * freq;
    if (history == nullptr) return nullptr;
    const std::size_t hj = static_cast<std::size_t>(j + static_cast<std::ptrdiff_t>(lag));
    return history + ((hj * batch + b) * s.in_channels + ch) * freq;
  };

  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t grp = 0; grp < s.groups; ++grp) {
        float* out = y + ((t * batch + b) * s.out_channels + grp * cout_g) * freq;
        for (std::size_t o = 0; o < cout_g; ++o)
          std::fill_n(out + o * freq, freq, conv.bias[grp * cout_g + o]);
        const float* w = conv.weight.data() + grp * cout_g * K;

        if (pointwise) {
          const float* src = frame_ptr(static_cast<std::ptrdiff_t>(t), b, grp * cin_g);
          gemm_acc(cout_g, freq, K, w, K, src, freq, out, freq);
          continue;
        }

        for (std::size_t ci = 0; ci < cin_g; ++ci) {
          for (std::size_t a = 0; a < s.kernel_time; ++a) {
            const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(t + a) - static_cast<std::ptrdiff_t>(lag);
            const float* src = frame_ptr(j, b, grp * cin_g + ci);
            for (std::size_t q = 0; q < s.kernel_freq; ++q) {
              float* row = cols.data() + ((ci * s.kernel_time + a) * s.kernel_freq + q) * freq;
              const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(q) - pad_f;
              if (src == nullptr) {
                std::fill_n(row, freq, 0.0f);
                continue;
              }
              const std::ptrdiff_t F = static_cast<std::ptrdiff_t>(freq);
              const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
              const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(F, F - shift);
              std::fill_n(row, lo, 0.0f);
              std::copy(src + lo + shift, src + hi + shift, row + lo);
              std::fill(row + hi, row + F, 0.0f);
            }
          }
        }
        gemm_acc(cout_g, freq, K, w, K, cols.data(), freq, out, freq);
      }
    }
  }
}

inline void norm_frames(const float* x, std::size_t slices, std::size_t channels, std::size_t freq,
                        const Norm& norm, float* y) {
  const std::size_t n = channels * freq;
  for (std::size_t s = 0; s < slices; ++s) {
    const float* in = x + s * n;
    float* out = y + s * n;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += in[i];
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = in[i] - mean;
      sq += d * d;
    }
    const double var = sq / static_cast<double>(n);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + norm.eps));
    const float m = static_cast<float>(mean);
    for (std::size_t c = 0; c < channels; ++c) {
      const float g = norm.gain[c] * inv;
      const float o = norm.offset[c];
      const float* ic = in + c * freq;
      float* oc = out + c * freq;
      for (std::size_t f = 0; f < freq; ++f) oc[f] = (ic[f] - m) * g + o;
    }
  }
}

inline void linear_rows(const float* x, std::size_t rows, const Linear& lin, float* y) {
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(lin.bias.begin(), lin.bias.end(), y + r * lin.out_features);
  gemm_acc(rows, lin.out_features, lin.in_features, x, lin.in_features, lin.weight_t.data(),
           lin.out_features, y, lin.out_features);
}

// One LSTM step for `rows` independent sequences; h and c are updated in place.
inline void lstm_step(const float* x, std::size_t rows, const Lstm& lstm, float* h, float* c,
                      std::vector<float>& gates) {
  const std::size_t H = lstm.spec.hidden_size;
  const std::size_t G = 4 * H;
  gates.resize(rows * G);
  for (std::size_t r = 0; r < rows; ++r) std::copy(lstm.bias.begin(), lstm.bias.end(), gates.begin() + r * G);
  gemm_acc(rows, G, lstm.spec.input_size, x, lstm.spec.input_size, lstm.w_ih_t.data(), G,
           gates.data(), G);
  gemm_acc(rows, G, H, h, H, lstm.w_hh_t.data(), G, gates.data(), G);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* g = gates.data() + r * G;
    float* hr = h + r * H;
    float* cr = c + r * H;
    for (std::size_t k = 0; k < H; ++k) {
      const float i_gate = sigmoid_approx(g[k]);
      const float f_gate = sigmoid_approx(g[H + k]);
      const float cell = tanh_approx(g[2 * H + k]);
      const float o_gate = sigmoid_approx(g[3 * H + k]);
      const float cn = f_gate * cr[k] + i_gate * cell;
      cr[k] = cn;
      hr[k] = o_gate * tanh_approx(cn);
    }
  }
}

template <Scalar T>
void roll_history(Tensor<T>& history, const Tensor<T>& input) {
  // history: (lag, B, C, F); keep the last `lag` frames of [history; input]
  const std::size_t lag = history.dim(0);
  const std::size_t frame = history.size() / lag;
  const std::size_t frames = input.dim(0);
  auto& h = history.storage();
  const auto& in = input.storage();
  if (frames >= lag) {
    std::copy(in.end() - static_cast<std::ptrdiff_t>(lag * frame), in.end(), h.begin());
  } else {
    const std::size_t keep = lag - frames;
    std::copy(h.end() - static_cast<std::ptrdiff_t>(keep * frame), h.end(), h.begin());
    std::copy(in.begin(), in.end(), h.begin() + static_cast<std::ptrdiff_t>(keep * frame));
  }
}

}  // namespace detail

/// Causal 2-D convolution over a (T, B, Cin, F) feature map. Frequency is
/// zero-padded symmetrically; time is left-padded with `history` (the
/// kernel_time-1 frames that preceded this call), or with zeros when no
/// history is given. When given, history is advanced past this input.
template <Scalar T>
Tensor<T> conv2d_causal(const Tensor<T>& input, const Conv2d& conv, Tensor<T>* history = nullptr) {
  const ConvSpec& s = conv.spec;
  s.validate();
  detail::require(input.rank() == 4, "conv input must be (T,B,C,F)");
  detail::require(input.dim(2) == s.in_channels,
                  "conv input has " + std::to_string(input.dim(2)) + " channels, expected " +
                      std::to_string(s.in_channels));
  detail::require(conv.weight.size() == s.weight_count() && conv.bias.size() == s.out_channels,
                  "conv weights do not match spec");
  const std::size_t frames = input.dim(0), batch = input.dim(1), freq = input.dim(3);
  const std::size_t lag = s.kernel_time - 1;
  if (history != nullptr && lag > 0) {
    detail::require(history->shape() == Shape{lag, batch, s.in_channels, freq},
                    "conv history shape " + shape_string(history->shape()) + " mismatch");
  }

  Tensor<T> out({frames, batch, s.out_channels, freq});
  const detail::FloatData<T> x(input.data());
  std::optional<detail::FloatData<T>> hist;
  if (history != nullptr && lag > 0) hist.emplace(history->data());
  detail::FloatSink<T> sink(out);
  detail::conv_frames(x.data(), hist ? hist->data() : nullptr, frames, batch, freq, conv, sink.data());
  sink.commit();
  if (history != nullptr && lag > 0) detail::roll_history(*history, input);
  return out;
}

/// 1x1 convolution: a per-(t, f) linear map across channels.
template <Scalar T>
Tensor<T> pointwise_conv(const Tensor<T>& input, const Conv2d& conv) {
  detail::require(conv.spec.kernel_time == 1 && conv.spec.kernel_freq == 1,
                  "pointwise_conv requires a 1x1 kernel");
  return conv2d_causal(input, conv);
}

/// Affine map over the last axis; leading axes are preserved.
template <Scalar T>
Tensor<T> linear(const Tensor<T>& input, const Linear& lin) {
  detail::require(input.rank() >= 1 && input.shape().back() == lin.in_features,
                  "linear input width mismatch");
  detail::require(lin.weight_t.size() == lin.in_features * lin.out_features &&
                      lin.bias.size() == lin.out_features,
                  "linear weights do not match features");
  Shape shape = input.shape();
  shape.back() = lin.out_features;
  Tensor<T> out(shape);
  const detail::FloatData<T> x(input.data());
  detail::FloatSink<T> sink(out);
  detail::linear_rows(x.data(), input.size() / lin.in_features, lin, sink.data());
  sink.commit();
  return out;
}

/// Per-frame normalization over each (C, F) slice of a (T, B, C, F) map,
/// followed by per-channel gain and offset. Frame t only reads frame t.
template <Scalar T>
Tensor<T> causal_norm(const Tensor<T>& input, const Norm& norm) {
  detail::require(input.rank() == 4, "causal_norm input must be (T,B,C,F)");
  detail::require(norm.gain.size() == input.dim(2) && norm.offset.size() == input.dim(2),
                  "norm parameters do not match channels");
  detail::require(norm.eps > 0.0f, "norm eps must be positive");
  Tensor<T> out(input.shape());
  const detail::FloatData<T> x(input.data());
  detail::FloatSink<T> sink(out);
  detail::norm_frames(x.data(), input.dim(0) * input.dim(1), input.dim(2), input.dim(3), norm,
                      sink.data());
  sink.commit();
  return out;
}

template <Scalar T>
Tensor<T> gelu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  const detail::FloatData<T> x(input.data());
  detail::FloatSink<T> sink(out);
  float* y = sink.data();
  std::copy(x.data(), x.data() + x.size(), y);
  detail::gelu_inplace(y, out.size());
  sink.commit();
  return out;
}

/// Numerically stable softmax along one axis.
template <Scalar T>
Tensor<T> softmax_over_axis(const Tensor<T>& input, std::size_t axis) {
  detail::require(axis < input.rank(), "softmax axis out of range");
  const Shape& sh = input.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sh[i];
  for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
  const std::size_t n = sh[axis];

  Tensor<T> out(sh);
  const detail::FloatData<T> xd(input.data());
  detail::FloatSink<T> sink(out);
  const float* x = xd.data();
  float* y = sink.data();
  std::vector<float> peak(inner), total(inner);
  for (std::size_t o = 0; o < outer; ++o) {
    const float* xb = x + o * n * inner;
    float* yb = y + o * n * inner;
    std::copy(xb, xb + inner, peak.begin());
    for (std::size_t k = 1; k < n; ++k)
      for (std::size_t j = 0; j < inner; ++j) peak[j] = std::max(peak[j], xb[k * inner + j]);
    std::fill(total.begin(), total.end(), 0.0f);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < inner; ++j) {
        const float e = detail::exp_approx(xb[k * inner + j] - peak[j]);
        yb[k * inner + j] = e;
        total[j] += e;
      }
    }
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < inner; ++j) yb[k * inner + j] /= total[j];
  }
  sink.commit();
  return out;
}

/// Runs a unidirectional LSTM over (B, T, Din) input starting from `state`,
/// returning (B, T, H) hidden outputs. `state` is left at the final step, so
/// splitting a sequence and carrying the state reproduces the one-shot run.
template <Scalar T>
Tensor<T> lstm_seq(const Tensor<T>& input, const Lstm& lstm, LstmState<T>& state) {
  detail::require(input.rank() == 3 && input.dim(2) == lstm.spec.input_size,
                  "lstm input must be (B,T,input_size)");
  const std::size_t B = input.dim(0), steps = input.dim(1), D = input.dim(2);
  const std::size_t H = lstm.spec.hidden_size;
  detail::require(state.h.shape() == Shape{B, H} && state.c.shape() == Shape{B, H},
                  "lstm state shape mismatch");

  const detail::FloatData<T> x(input.data());
  std::vector<float> h(B * H), c(B * H);
  detail::FloatData<T> h0(state.h.data()), c0(state.c.data());
  std::copy(h0.data(), h0.data() + B * H, h.begin());
  std::copy(c0.data(), c0.data() + B * H, c.begin());

  Tensor<T> out({B, steps, H});
  std::vector<float> step_in(B * D), gates;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(x.data() + (b * steps + t) * D, D, step_in.begin() + b * D);
    detail::lstm_step(step_in.data(), B, lstm, h.data(), c.data(), gates);
    if constexpr (!std::is_same_v<T, float>) {
      round_to_half(h);
      round_to_half(c);
    }
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < H; ++k) out[(b * steps + t) * H + k] = from_f32<T>(h[b * H + k]);
  }
  for (std::size_t i = 0; i < B * H; ++i) {
    state.h[i] = from_f32<T>(h[i]);
    state.c[i] = from_f32<T>(c[i]);
  }
  return out;
}

/// a += b, elementwise.
template <Scalar T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = from_f32<T>(to_f32(a[i]) + to_f32(b[i]));
}

/// x (T, S, C, F) *= skip (T, 1, C, F), broadcasting across the S axis.
template <Scalar T>
void multiply_broadcast(Tensor<T>& x, const Tensor<T>& skip) {
  detail::require(x.rank() == 4 && skip.rank() == 4 && skip.dim(1) == 1 &&
                      x.dim(0) == skip.dim(0) && x.dim(2) == skip.dim(2) && x.dim(3) == skip.dim(3),
                  "skip shape " + shape_string(skip.shape()) + " does not broadcast onto " +
                      shape_string(x.shape()));
  const std::size_t frames = x.dim(0), S = x.dim(1), n = x.dim(2) * x.dim(3);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      T* xs = x.data().data() + (t * S + s) * n;
      const T* k = skip.data().data() + t * n;
      for (std::size_t i = 0; i < n; ++i) xs[i] = from_f32<T>(to_f32(xs[i]) * to_f32(k[i]));
    }
}

}  // namespace rtstt
