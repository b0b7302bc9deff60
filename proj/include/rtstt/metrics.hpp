#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtstt/audio.hpp"

namespace rtstt {

/// Aggregates replace +inf (perfect reconstruction) with this value.
inline constexpr double kSdrCap = 100.0;

enum class SdrKind { Finite, Infinite, Undefined };

/// An SDR value in dB, or a marker for the two degenerate cases:
/// zero error (Infinite) and zero reference energy (Undefined).
struct Sdr {
  SdrKind kind = SdrKind::Undefined;
  double db = 0.0;

  static Sdr finite(double v) { return {SdrKind::Finite, v}; }
  static Sdr infinite() { return {SdrKind::Infinite, std::numeric_limits<double>::infinity()}; }
  static Sdr undefined() { return {}; }

  bool defined() const { return kind != SdrKind::Undefined; }
  /// Value for aggregation; only meaningful when defined().
  double capped() const { return kind == SdrKind::Infinite ? kSdrCap : std::min(db, kSdrCap); }
};

inline std::string to_string(const Sdr& s) {
  switch (s.kind) {
    case SdrKind::Undefined:
      return "undefined";
    case SdrKind::Infinite:
      return "inf";
    default: {
      std::ostringstream os;
      os << std::fixed << std::setprecision(3) << s.db;
      return os.str();
    }
  }
}

namespace detail {

inline void check_pair(const AudioChunk& ref, const AudioChunk& est) {
  ref.validate();
  est.validate();
  if (ref.channel_count() != est.channel_count() || ref.length() != est.length())
    throw std::invalid_argument("reference and estimate shapes differ");
}

inline Sdr sdr_range(const AudioChunk& ref, const AudioChunk& est, std::size_t begin, std::size_t end) {
  double signal = 0.0, error = 0.0;
  for (std::size_t ch = 0; ch < ref.channel_count(); ++ch) {
    const auto& r = ref.channels[ch];
    const auto& e = est.channels[ch];
    for (std::size_t i = begin; i < end; ++i) {
      const double d = static_cast<double>(r[i]) - static_cast<double>(e[i]);
      signal += static_cast<double>(r[i]) * r[i];
      error += d * d;
    }
  }
  if (signal == 0.0) return Sdr::undefined();
  if (error == 0.0) return Sdr::infinite();
  return Sdr::finite(10.0 * std::log10(signal / error));
}

}  // namespace detail

/// Median; an even count averages the two middle values.
inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

/// 10 log10(|ref|^2 / |ref - est|^2) over all channels jointly.
inline Sdr sdr(const AudioChunk& ref, const AudioChunk& est) {
  detail::check_pair(ref, est);
  return detail::sdr_range(ref, est, 0, ref.length());
}

/// SDR of each whole chunk of `chunk_seconds`; a trailing partial chunk is
/// dropped and chunks with a silent reference are skipped.
inline std::vector<Sdr> chunk_sdrs(const AudioChunk& ref, const AudioChunk& est, double chunk_seconds = 1.0) {
  detail::check_pair(ref, est);
  const auto len = static_cast<std::size_t>(std::llround(chunk_seconds * ref.sample_rate));
  if (len == 0) throw std::invalid_argument("chunk length must be at least one sample");
  std::vector<Sdr> out;
  for (std::size_t begin = 0; begin + len <= ref.length(); begin += len) {
    const Sdr s = detail::sdr_range(ref, est, begin, begin + len);
    if (s.defined()) out.push_back(s);
  }
  return out;
}

/// Median chunk SDR of one track.
inline Sdr csdr_track(const AudioChunk& ref, const AudioChunk& est, double chunk_seconds = 1.0) {
  std::vector<double> v;
  for (const Sdr& s : chunk_sdrs(ref, est, chunk_seconds)) v.push_back(s.capped());
  const auto m = median(std::move(v));
  return m ? Sdr::finite(*m) : Sdr::undefined();
}

/// Chunk-level SDR over tracks: median of the per-track medians.
inline Sdr csdr(const std::vector<AudioChunk>& refs, const std::vector<AudioChunk>& ests,
                double chunk_seconds = 1.0) {
  if (refs.size() != ests.size()) throw std::invalid_argument("track counts differ");
  std::vector<double> v;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Sdr s = csdr_track(refs[i], ests[i], chunk_seconds);
    if (s.defined()) v.push_back(s.db);
  }
  const auto m = median(std::move(v));
  return m ? Sdr::finite(*m) : Sdr::undefined();
}

/// Utterance-level SDR: mean of whole-track SDRs.
inline Sdr usdr(const std::vector<AudioChunk>& refs, const std::vector<AudioChunk>& ests) {
  if (refs.size() != ests.size()) throw std::invalid_argument("track counts differ");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Sdr s = sdr(refs[i], ests[i]);
    if (!s.defined()) continue;
    sum += s.capped();
    ++n;
  }
  return n ? Sdr::finite(sum / static_cast<double>(n)) : Sdr::undefined();
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct TrackInput {
  std::string name;
  std::vector<AudioChunk> references;  // one per source
  std::vector<AudioChunk> estimates;
};

struct TrackSourceScore {
  std::string track;
  std::string source;
  std::vector<double> chunks;  // capped dB of every defined chunk
  Sdr csdr;                    // median of chunks
  Sdr sdr;                     // whole track
};

struct SourceAggregate {
  std::string source;
  Sdr csdr;
  Sdr usdr;
};

struct SdrReport {
  std::vector<TrackSourceScore> scores;
  std::vector<SourceAggregate> sources;
  Sdr csdr_all;  // mean over sources with a defined value
  Sdr usdr_all;
};

inline SdrReport evaluate(const std::vector<TrackInput>& tracks, const std::vector<std::string>& source_names,
                          double chunk_seconds = 1.0) {
  SdrReport rep;
  const std::size_t S = source_names.size();
  for (const auto& t : tracks) {
    if (t.references.size() != S || t.estimates.size() != S)
      throw std::invalid_argument("track " + t.name + " does not have one reference and estimate per source");
  }
  double csum = 0.0, usum = 0.0;
  std::size_t cn = 0, un = 0;
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<AudioChunk> refs, ests;
    for (const auto& t : tracks) {
      TrackSourceScore sc{t.name, source_names[s], {}, {}, sdr(t.references[s], t.estimates[s])};
      for (const Sdr& c : chunk_sdrs(t.references[s], t.estimates[s], chunk_seconds)) sc.chunks.push_back(c.capped());
      const auto m = median(sc.chunks);
      sc.csdr = m ? Sdr::finite(*m) : Sdr::undefined();
      rep.scores.push_back(std::move(sc));
      refs.push_back(t.references[s]);
      ests.push_back(t.estimates[s]);
    }
    SourceAggregate agg{source_names[s], csdr(refs, ests, chunk_seconds), usdr(refs, ests)};
    if (agg.csdr.defined()) {
      csum += agg.csdr.db;
      ++cn;
    }
    if (agg.usdr.defined()) {
      usum += agg.usdr.db;
      ++un;
    }
    rep.sources.push_back(agg);
  }
  rep.csdr_all = cn ? Sdr::finite(csum / static_cast<double>(cn)) : Sdr::undefined();
  rep.usdr_all = un ? Sdr::finite(usum / static_cast<double>(un)) : Sdr::undefined();
  return rep;
}

inline std::string format_table(const SdrReport& rep) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "source" << std::right << std::setw(12) << "cSDR(dB)" << std::setw(12)
     << "uSDR(dB)" << '\n';
  for (const auto& a : rep.sources)
    os << std::left << std::setw(12) << a.source << std::right << std::setw(12) << to_string(a.csdr)
       << std::setw(12) << to_string(a.usdr) << '\n';
  os << std::left << std::setw(12) << "all" << std::right << std::setw(12) << to_string(rep.csdr_all)
     << std::setw(12) << to_string(rep.usdr_all) << '\n';
  return os.str();
}

inline nlohmann::json to_json(const Sdr& s) {
  if (!s.defined()) return nullptr;
  return s.capped();
}

/// One JSON object per (track, source) line.
inline std::string format_json_lines(const SdrReport& rep) {
  std::ostringstream os;
  for (const auto& sc : rep.scores) {
    nlohmann::json j{{"track", sc.track},          {"source", sc.source},
                     {"csdr", to_json(sc.csdr)},   {"sdr", to_json(sc.sdr)},
                     {"chunks", sc.chunks.size()}};
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace rtstt
