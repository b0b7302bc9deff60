#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtstt/engine.hpp"
#include "rtstt/model.hpp"
#include "rtstt/rng.hpp"

namespace rtstt {

struct BenchOptions {
  std::size_t input_samples = 1024;
  std::size_t iterations = 1000;
  std::size_t warmup = 50;
  std::uint64_t seed = 7;
};

enum class BenchScope { Pipeline, ModelOnly };

inline const char* to_string(BenchScope s) { return s == BenchScope::Pipeline ? "pipeline" : "model"; }

struct BenchReport {
  std::string fingerprint;
  BenchScope scope = BenchScope::Pipeline;
  std::size_t parameters = 0;
  std::size_t input_samples = 0;
  std::size_t warmup = 0;
  std::vector<double> times_ms;  // timed iterations only
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double rtf = 0.0;  // median time over the audio duration it covers

  std::size_t iterations() const { return times_ms.size(); }
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline void summarize(BenchReport& r, std::uint32_t sample_rate) {
  r.median_ms = percentile(r.times_ms, 0.5);
  r.p95_ms = percentile(r.times_ms, 0.95);
  r.mean_ms = r.times_ms.empty() ? 0.0
                                 : std::accumulate(r.times_ms.begin(), r.times_ms.end(), 0.0) /
                                       static_cast<double>(r.times_ms.size());
  r.rtf = r.median_ms / (1000.0 * static_cast<double>(r.input_samples) / sample_rate);
}

inline AudioChunk bench_input(const ModelConfig& cfg, std::size_t samples, std::uint64_t seed) {
  AudioChunk a = AudioChunk::silence(cfg.c0, samples, cfg.sample_rate);
  for (std::size_t ch = 0; ch < cfg.c0; ++ch) {
    const CounterRng rng(seed, "bench.input." + std::to_string(ch));
    for (std::size_t i = 0; i < samples; ++i) a.channels[ch][i] = static_cast<float>(2.0 * rng.uniform(i) - 1.0);
  }
  return a;
}

using BenchClock = std::chrono::steady_clock;

inline double elapsed_ms(BenchClock::time_point t0, BenchClock::time_point t1) {
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

/// Times `iterations` runs of one configuration. Each run starts from a
/// fresh stream state, reset outside the clock.
class Runner {
 public:
  Runner(const ModelGraph& model, BenchScope scope, const BenchOptions& opt)
      : model_(model), scope_(scope), stream_(model), state_(model.new_state()) {
    const ModelConfig& cfg = model.config();
    audio_ = bench_input(cfg, opt.input_samples, opt.seed);
    if (scope == BenchScope::ModelOnly) {
      StftKernel kernel(cfg.stft());
      std::vector<std::vector<float>> tails;
      frames_ = analyze_frames(kernel, audio_, std::max<std::size_t>(1, opt.input_samples / cfg.hop), tails);
    }
  }

  double once() {
    if (scope_ == BenchScope::Pipeline) {
      stream_.reset();
      const auto t0 = BenchClock::now();
      const SourceAudio out = stream_.push(audio_);
      const auto t1 = BenchClock::now();
      sink_ += out.samples;
      return elapsed_ms(t0, t1);
    }
    state_ = model_.new_state();
    const auto t0 = BenchClock::now();
    const Tensor<float> y = model_.forward_frames(frames_, state_);
    const auto t1 = BenchClock::now();
    sink_ += y.size();
    return elapsed_ms(t0, t1);
  }

 private:
  const ModelGraph& model_;
  BenchScope scope_;
  Stream stream_;
  ModelGraph::State state_;
  AudioChunk audio_;
  Tensor<float> frames_;
  std::size_t sink_ = 0;
};

}  // namespace detail

/// Wall-clock timing of one forward over `input_samples` of stereo audio.
/// The pipeline scope covers STFT, network and inverse STFT; the model
/// scope covers the network alone.
inline BenchReport bench_forward(const ModelGraph& model, const BenchOptions& opt = {},
                                 BenchScope scope = BenchScope::Pipeline) {
  BenchReport r;
  r.fingerprint = model.config().fingerprint();
  r.scope = scope;
  r.parameters = model.parameter_count();
  r.input_samples = opt.input_samples;
  r.warmup = opt.warmup;
  detail::Runner run(model, scope, opt);
  for (std::size_t i = 0; i < opt.warmup; ++i) run.once();
  r.times_ms.reserve(opt.iterations);
  for (std::size_t i = 0; i < opt.iterations; ++i) r.times_ms.push_back(run.once());
  detail::summarize(r, model.config().sample_rate);
  return r;
}

// ---------------------------------------------------------------------------
// Variant comparison
// ---------------------------------------------------------------------------

struct VariantRow {
  std::string label;
  ModelConfig config;
  std::size_t parameters = 0;
  BenchReport pipeline;
  BenchReport model;
};

inline std::vector<VariantRow> compare_variants(const std::vector<std::pair<std::string, ModelConfig>>& variants,
                                                const BenchOptions& opt = {}, std::uint64_t weight_seed = 1) {
  std::vector<VariantRow> rows;
  for (const auto& [label, cfg] : variants) {
    const ModelGraph m = ModelGraph::random(cfg, weight_seed);
    rows.push_back({label, cfg, m.parameter_count(), bench_forward(m, opt, BenchScope::Pipeline),
                    bench_forward(m, opt, BenchScope::ModelOnly)});
  }
  return rows;
}

inline std::string format_table(const std::vector<VariantRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "variant" << std::right << std::setw(10) << "params" << std::setw(13)
     << "median(ms)" << std::setw(11) << "mean(ms)" << std::setw(10) << "p95(ms)" << std::setw(13) << "model(ms)"
     << std::setw(8) << "RTF" << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    os << std::left << std::setw(20) << r.label << std::right << std::setw(10) << r.parameters << std::setw(13)
       << r.pipeline.median_ms << std::setw(11) << r.pipeline.mean_ms << std::setw(10) << r.pipeline.p95_ms
       << std::setw(13) << r.model.median_ms << std::setw(8) << r.pipeline.rtf << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const BenchReport& r) {
  return {{"config", r.fingerprint},       {"scope", to_string(r.scope)},  {"parameters", r.parameters},
          {"input_samples", r.input_samples}, {"iterations", r.iterations()}, {"warmup", r.warmup},
          {"median_ms", r.median_ms},      {"mean_ms", r.mean_ms},         {"p95_ms", r.p95_ms},
          {"rtf", r.rtf}};
}

inline std::string format_json_lines(const std::vector<VariantRow>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) {
    for (const BenchReport* b : {&r.pipeline, &r.model}) {
      nlohmann::json j = to_json(*b);
      j["variant"] = r.label;
      os << j.dump() << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Ordinal timing claims
// ---------------------------------------------------------------------------

enum class Ordering { Faster, NotSlower, Slower };

inline const char* to_string(Ordering o) {
  switch (o) {
    case Ordering::Faster:
      return "<";
    case Ordering::NotSlower:
      return "<=";
    default:
      return ">";
  }
}

struct TrendOptions {
  std::size_t rounds = 5;
  std::size_t iterations_per_round = 200;
  std::size_t warmup = 50;
  std::size_t input_samples = 1024;
  BenchScope scope = BenchScope::Pipeline;
};

struct TrendResult {
  std::string label;
  Ordering ordering = Ordering::Faster;
  double median_a_ms = 0.0;  // over all iterations
  double median_b_ms = 0.0;
  double mean_diff_ms = 0.0;  // mean over rounds of (median_a - median_b)
  double noise_ms = 0.0;      // one-sided 95% margin on mean_diff
  bool strictly_ordered = false;  // the raw medians satisfy the claim
  bool holds = false;             // not violated beyond the noise margin
};

namespace detail {

// One-sided 95% Student t quantiles for 1..10 degrees of freedom.
inline double t95(std::size_t df) {
  static constexpr double table[] = {6.314, 2.920, 2.353, 2.132, 2.015, 1.943, 1.895, 1.860, 1.833, 1.812};
  if (df == 0) return std::numeric_limits<double>::infinity();
  return df <= 10 ? table[df - 1] : 1.645 + 1.6 / static_cast<double>(df);
}

}  // namespace detail

/// Checks a timing claim "a `ordering` b". The two models run in
/// alternating rounds so drift in machine load hits both. The claim fails
/// only when it is violated by more than the round-to-round noise.
inline TrendResult check_trend(const std::string& label, const ModelGraph& a, const ModelGraph& b,
                               Ordering ordering, const TrendOptions& opt = {}) {
  BenchOptions bo;
  bo.input_samples = opt.input_samples;
  detail::Runner ra(a, opt.scope, bo), rb(b, opt.scope, bo);
  for (std::size_t i = 0; i < opt.warmup; ++i) {
    ra.once();
    rb.once();
  }
  std::vector<double> all_a, all_b, diffs;
  for (std::size_t round = 0; round < opt.rounds; ++round) {
    std::vector<double> ta, tb;
    for (std::size_t i = 0; i < opt.iterations_per_round; ++i) {
      ta.push_back(ra.once());
      tb.push_back(rb.once());
    }
    diffs.push_back(detail::percentile(ta, 0.5) - detail::percentile(tb, 0.5));
    all_a.insert(all_a.end(), ta.begin(), ta.end());
    all_b.insert(all_b.end(), tb.begin(), tb.end());
  }
  TrendResult r;
  r.label = label;
  r.ordering = ordering;
  r.median_a_ms = detail::percentile(all_a, 0.5);
  r.median_b_ms = detail::percentile(all_b, 0.5);
  const double n = static_cast<double>(diffs.size());
  r.mean_diff_ms = std::accumulate(diffs.begin(), diffs.end(), 0.0) / n;
  double var = 0.0;
  for (double d : diffs) var += (d - r.mean_diff_ms) * (d - r.mean_diff_ms);
  var = diffs.size() > 1 ? var / (n - 1.0) : 0.0;
  r.noise_ms = detail::t95(diffs.size() - 1) * std::sqrt(var / n);

  if (ordering == Ordering::Slower) {
    r.strictly_ordered = r.median_a_ms > r.median_b_ms;
    r.holds = r.mean_diff_ms + r.noise_ms >= 0.0;  // violated: a significantly faster
  } else {
    r.strictly_ordered =
        ordering == Ordering::Faster ? r.median_a_ms < r.median_b_ms : r.median_a_ms <= r.median_b_ms;
    r.holds = r.mean_diff_ms - r.noise_ms <= 0.0;  // violated: a significantly slower
  }
  return r;
}

inline std::string format_trend(const TrendResult& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << r.label << ": " << r.median_a_ms << " ms " << to_string(r.ordering)
     << " " << r.median_b_ms << " ms (round diff " << r.mean_diff_ms << " +/- " << r.noise_ms << ") "
     << (r.holds ? "holds" : "violated");
  return os.str();
}

}  // namespace rtstt
