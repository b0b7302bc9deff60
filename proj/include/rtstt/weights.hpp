#pragma once

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "rtstt/config.hpp"
#include "rtstt/kernels.hpp"
#include "rtstt/rng.hpp"

namespace rtstt {

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

enum class ParamKind { Weight, Bias, Gain, Offset };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamKind kind;
  std::size_t fan_in;  // only meaningful for weights
};

namespace detail {

class LayoutBuilder {
 public:
  void conv(const std::string& p, const ConvSpec& s) {
    out_.push_back({p + ".weight", s.weight_shape(), ParamKind::Weight, s.fan_in()});
    out_.push_back({p + ".bias", {s.out_channels}, ParamKind::Bias, 0});
  }
  void norm(const std::string& p, std::size_t c) {
    out_.push_back({p + ".gain", {c}, ParamKind::Gain, 0});
    out_.push_back({p + ".offset", {c}, ParamKind::Offset, 0});
  }
  void linear(const std::string& p, std::size_t in, std::size_t out) {
    out_.push_back({p + ".weight", {out, in}, ParamKind::Weight, in});
    out_.push_back({p + ".bias", {out}, ParamKind::Bias, 0});
  }
  void lstm(const std::string& p, std::size_t in, std::size_t hidden) {
    out_.push_back({p + ".w_ih", {4 * hidden, in}, ParamKind::Weight, in});
    out_.push_back({p + ".w_hh", {4 * hidden, hidden}, ParamKind::Weight, hidden});
    out_.push_back({p + ".bias", {4 * hidden}, ParamKind::Bias, 0});
  }
  void tfc_tdf(const std::string& p, std::size_t c, std::size_t freq, std::size_t bottleneck) {
    const ConvSpec k3{c, c, 3, 3, 1};
    conv(p + ".tfc1.conv1", k3);
    norm(p + ".tfc1.norm1", c);
    conv(p + ".tfc1.conv2", k3);
    norm(p + ".tfc1.norm2", c);
    linear(p + ".tdf.fc1", freq, bottleneck);
    linear(p + ".tdf.fc2", bottleneck, freq);
    conv(p + ".tfc2.conv1", k3);
    norm(p + ".tfc2.norm1", c);
    conv(p + ".tfc2.conv2", k3);
    norm(p + ".tfc2.norm2", c);
    conv(p + ".residual", k3);
  }
  void rnn_block(const std::string& p, std::size_t c, std::size_t hidden) {
    norm(p + ".norm", c);
    lstm(p + ".lstm", c, hidden);
    linear(p + ".fc", hidden, c);
  }
  std::vector<ParamSpec> take() { return std::move(out_); }

 private:
  std::vector<ParamSpec> out_;
};

}  // namespace detail

/// Pointwise conv used by decoder level `depth` to halve channel width.
/// Joint fusion folds sources into channels for one mixed convolution;
/// separate fusion is the same map restricted to per-source groups.
inline ConvSpec decoder_fusion_spec(const ModelConfig& cfg, std::size_t depth) {
  const std::size_t S = cfg.sources;
  return {S * cfg.width_at(depth + 1), S * cfg.width_at(depth), 1, 1,
          cfg.fusion_mode == FusionMode::Joint ? 1 : S};
}

/// Names and shapes of every tensor the config implies, in file order.
inline std::vector<ParamSpec> weight_layout(const ModelConfig& raw) {
  const ModelConfig cfg = raw.resolved();
  cfg.validate();
  const std::size_t F = cfg.f_kept, d = cfg.tdf_width(), S = cfg.sources, H = cfg.hidden();
  detail::LayoutBuilder b;
  b.conv("enc_in", {cfg.spec_channels(), cfg.g, 1, 1, 1});
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const std::string p = "enc" + std::to_string(i);
    const std::size_t c = cfg.width_at(i);
    b.tfc_tdf(p + ".block", c, F, d);
    b.conv(p + ".down", {c, 2 * c, 1, 1, 1});
  }
  const std::size_t lw = cfg.latent_width();
  b.tfc_tdf("latent.block", lw, F, d);
  for (std::size_t j = 0; j < cfg.l_repeats; ++j) {
    const std::string p = "latent.path" + std::to_string(j);
    b.rnn_block(p + ".rnn0", lw, H);
    b.rnn_block(p + ".rnn1", lw, H);
  }
  b.conv("latent.expand", {lw, S * lw, 1, 1, 1});
  for (std::size_t i = cfg.layers; i-- > 0;) {
    const std::string p = "dec" + std::to_string(i);
    b.conv(p + ".up", decoder_fusion_spec(cfg, i));
    b.tfc_tdf(p + ".block", cfg.width_at(i), F, d);
  }
  b.conv("dec_out", {S * cfg.g, S * cfg.spec_channels(), 1, 1, S});
  return b.take();
}

// ---------------------------------------------------------------------------
// Weight sets
// ---------------------------------------------------------------------------

struct WeightEntry {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::vector<float> f32;
  std::vector<Half> f16;

  std::size_t count() const { return shape_size(shape); }
  std::size_t payload_bytes() const { return count() * dtype_size(dtype); }

  std::vector<float> values() const {
    if (dtype == DType::F32) return f32;
    std::vector<float> out(f16.size());
    widen(f16, out.data());
    return out;
  }

  friend bool operator==(const WeightEntry&, const WeightEntry&) = default;
};

struct WeightSet {
  ModelConfig config;
  std::vector<WeightEntry> entries;

  const WeightEntry& get(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    throw std::out_of_range("no weight named " + name);
  }
  WeightEntry& get(const std::string& name) {
    return const_cast<WeightEntry&>(static_cast<const WeightSet&>(*this).get(name));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.count();
    return n;
  }
  std::size_t payload_bytes() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.payload_bytes();
    return n;
  }

  friend bool operator==(const WeightSet&, const WeightSet&) = default;
};

enum class WeightErrorCode {
  Io,
  BadMagic,
  UnsupportedVersion,
  Malformed,
  CrcMismatch,
  ConfigMismatch,
  AlreadyHalf,
};

inline const char* to_string(WeightErrorCode c) {
  switch (c) {
    case WeightErrorCode::Io: return "io";
    case WeightErrorCode::BadMagic: return "bad-magic";
    case WeightErrorCode::UnsupportedVersion: return "unsupported-version";
    case WeightErrorCode::Malformed: return "malformed";
    case WeightErrorCode::CrcMismatch: return "crc-mismatch";
    case WeightErrorCode::ConfigMismatch: return "config-mismatch";
    case WeightErrorCode::AlreadyHalf: return "already-f16";
  }
  return "unknown";
}

class WeightError : public std::runtime_error {
 public:
  WeightError(WeightErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  WeightErrorCode code() const { return code_; }

 private:
  WeightErrorCode code_;
};

/// Checks that a weight set carries exactly the tensors its config implies.
inline void check_consistent(const WeightSet& ws) {
  std::vector<ParamSpec> layout;
  try {
    layout = weight_layout(ws.config);
  } catch (const ConfigError& e) {
    throw WeightError(WeightErrorCode::ConfigMismatch, e.what());
  }
  if (layout.size() != ws.entries.size()) {
    throw WeightError(WeightErrorCode::ConfigMismatch,
                      "config implies " + std::to_string(layout.size()) + " tensors, file has " +
                          std::to_string(ws.entries.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& e = ws.entries[i];
    if (e.name != layout[i].name || e.shape != layout[i].shape) {
      throw WeightError(WeightErrorCode::ConfigMismatch,
                        "entry " + std::to_string(i) + " is " + e.name + shape_string(e.shape) +
                            ", config expects " + layout[i].name + shape_string(layout[i].shape));
    }
    if (e.dtype != ws.config.dtype) {
      throw WeightError(WeightErrorCode::ConfigMismatch, e.name + " dtype differs from config dtype");
    }
    const std::size_t have = e.dtype == DType::F32 ? e.f32.size() : e.f16.size();
    if (have != e.count()) throw WeightError(WeightErrorCode::ConfigMismatch, e.name + " data length");
  }
}

/// Seeded initialization: weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases and norm offsets zero, norm gains one. Value i of a tensor comes
/// from the counter-based generator keyed by (seed, tensor name), so every
/// tensor is reproducible on its own and across platforms.
inline WeightSet random_init(const ModelConfig& config, std::uint64_t seed) {
  WeightSet ws{config.resolved(), {}};
  ws.config.dtype = DType::F32;
  for (const auto& p : weight_layout(ws.config)) {
    WeightEntry e{p.name, DType::F32, p.shape, std::vector<float>(shape_size(p.shape), 0.0f), {}};
    if (p.kind == ParamKind::Gain) {
      std::fill(e.f32.begin(), e.f32.end(), 1.0f);
    } else if (p.kind == ParamKind::Weight) {
      const CounterRng rng(seed, p.name);
      const float bound = 1.0f / std::sqrt(static_cast<float>(p.fan_in));
      for (std::size_t i = 0; i < e.f32.size(); ++i) e.f32[i] = (2.0f * rng.uniform(i) - 1.0f) * bound;
    }
    ws.entries.push_back(std::move(e));
  }
  return ws;
}

/// Rounds every tensor to binary16 (nearest even); payload bytes halve.
inline WeightSet to_f16(const WeightSet& ws) {
  if (ws.config.dtype == DType::F16) throw WeightError(WeightErrorCode::AlreadyHalf, "weights are already f16");
  WeightSet out{ws.config, {}};
  out.config.dtype = DType::F16;
  for (const auto& e : ws.entries) {
    if (e.dtype != DType::F32) throw WeightError(WeightErrorCode::AlreadyHalf, e.name + " is already f16");
    WeightEntry h{e.name, DType::F16, e.shape, {}, std::vector<Half>(e.f32.size())};
    narrow(e.f32, h.f16.data());
    out.entries.push_back(std::move(h));
  }
  return out;
}

// ---------------------------------------------------------------------------
// RTST container
//
//   "RTST" | u16 version | 14 x u32 config | u32 entry count |
//   entries: u16 name length, name, u8 dtype, u8 rank, rank x u32 dims,
//            u64 payload bytes, payload |
//   u32 CRC-32 (IEEE) of every preceding byte
//
// All integers and payload scalars are little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kRtstVersion = 1;

inline std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (len > 0) {
    const uInt n = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
    crc = ::crc32(crc, data, n);
    data += n;
    len -= n;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace detail {

class ByteWriter {
 public:
  template <class U>
  void put(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t len) : p_(data), end_(data + len) {}

  template <class U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p_[i]) << (8 * i));
    p_ += sizeof(U);
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const std::uint8_t* at = p_;
    p_ += n;
    return at;
  }
  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw WeightError(WeightErrorCode::Malformed, "file truncated");
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

static_assert(std::endian::native == std::endian::little, "payload encoding assumes a little-endian host");

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const WeightSet& ws) {
  detail::ByteWriter w;
  w.raw("RTST", 4);
  w.put<std::uint16_t>(kRtstVersion);
  const ModelConfig& c = ws.config;
  for (std::uint32_t v : {c.c0, c.sample_rate, c.window, c.hop, c.f_kept, c.g, c.layers, c.l_repeats,
                          c.sources, c.tdf_divisor, c.lstm_hidden})
    w.put<std::uint32_t>(v);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.path_mode));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.fusion_mode));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.dtype));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ws.entries.size()));
  for (const auto& e : ws.entries) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (std::size_t d : e.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put<std::uint64_t>(e.payload_bytes());
    if (e.dtype == DType::F32) {
      w.raw(e.f32.data(), e.f32.size() * 4);
    } else {
      w.raw(e.f16.data(), e.f16.size() * 2);
    }
  }
  w.put<std::uint32_t>(crc32_ieee(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

inline WeightSet deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "RTST", 4) != 0) {
    throw WeightError(WeightErrorCode::BadMagic, "not an RTST weight file");
  }
  detail::ByteReader r(bytes.data() + 4, bytes.size() - 4);
  const auto version = r.get<std::uint16_t>();
  if (version != kRtstVersion) {
    throw WeightError(WeightErrorCode::UnsupportedVersion, "version " + std::to_string(version));
  }

  WeightSet ws;
  ModelConfig& c = ws.config;
  for (std::uint32_t* field : {&c.c0, &c.sample_rate, &c.window, &c.hop, &c.f_kept, &c.g, &c.layers,
                               &c.l_repeats, &c.sources, &c.tdf_divisor, &c.lstm_hidden})
    *field = r.get<std::uint32_t>();
  const auto path = r.get<std::uint32_t>();
  const auto fusion = r.get<std::uint32_t>();
  const auto dtype = r.get<std::uint32_t>();
  if (path > 1 || fusion > 1 || dtype > 1) throw WeightError(WeightErrorCode::Malformed, "bad enum in config");
  c.path_mode = static_cast<PathMode>(path);
  c.fusion_mode = static_cast<FusionMode>(fusion);
  c.dtype = static_cast<DType>(dtype);

  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    WeightEntry e;
    const auto name_len = r.get<std::uint16_t>();
    const std::uint8_t* name = r.take(name_len);
    e.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto dt = r.get<std::uint8_t>();
    if (dt > 1) throw WeightError(WeightErrorCode::Malformed, "bad dtype for " + e.name);
    e.dtype = static_cast<DType>(dt);
    const auto rank = r.get<std::uint8_t>();
    std::size_t elems = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint32_t>();
      if (d == 0) throw WeightError(WeightErrorCode::Malformed, "zero dimension in " + e.name);
      e.shape.push_back(d);
      elems *= d;
      if (elems > bytes.size()) throw WeightError(WeightErrorCode::Malformed, "implausible shape for " + e.name);
    }
    const auto payload = r.get<std::uint64_t>();
    if (payload != elems * dtype_size(e.dtype)) {
      throw WeightError(WeightErrorCode::Malformed, "payload size disagrees with shape for " + e.name);
    }
    const std::uint8_t* data = r.take(static_cast<std::size_t>(payload));
    if (e.dtype == DType::F32) {
      e.f32.resize(elems);
      std::memcpy(e.f32.data(), data, payload);
    } else {
      e.f16.resize(elems);
      std::memcpy(e.f16.data(), data, payload);
    }
    ws.entries.push_back(std::move(e));
  }
  const std::size_t body = bytes.size() - r.remaining();
  const auto stored = r.get<std::uint32_t>();
  if (r.remaining() != 0) throw WeightError(WeightErrorCode::Malformed, "trailing bytes after checksum");
  if (crc32_ieee(bytes.data(), body) != stored) throw WeightError(WeightErrorCode::CrcMismatch, "checksum mismatch");

  std::unordered_set<std::string> seen;
  for (const auto& e : ws.entries)
    if (!seen.insert(e.name).second) throw WeightError(WeightErrorCode::Malformed, "duplicate tensor " + e.name);
  check_consistent(ws);
  return ws;
}

inline void save(const WeightSet& ws, const std::filesystem::path& path) {
  check_consistent(ws);
  const auto bytes = serialize(ws);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WeightError(WeightErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WeightError(WeightErrorCode::Io, "write failed for " + path.string());
}

inline WeightSet load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightError(WeightErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace rtstt
