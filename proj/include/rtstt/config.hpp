#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rtstt/stft.hpp"
#include "rtstt/tensor.hpp"

namespace rtstt {

enum class PathMode : std::uint8_t { Single = 0, Dual = 1 };
enum class FusionMode : std::uint8_t { Joint = 0, Separate = 1 };

inline const char* to_string(PathMode m) { return m == PathMode::Single ? "single" : "dual"; }
inline const char* to_string(FusionMode m) { return m == FusionMode::Joint ? "joint" : "separate"; }

inline PathMode parse_path_mode(const std::string& s) {
  if (s == "single") return PathMode::Single;
  if (s == "dual") return PathMode::Dual;
  throw std::invalid_argument("path mode must be single or dual, got '" + s + "'");
}
inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "joint") return FusionMode::Joint;
  if (s == "separate") return FusionMode::Separate;
  throw std::invalid_argument("fusion mode must be joint or separate, got '" + s + "'");
}
inline DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::F32;
  if (s == "f16") return DType::F16;
  throw std::invalid_argument("dtype must be f32 or f16, got '" + s + "'");
}

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every hyperparameter of the network and its STFT frontend.
struct ModelConfig {
  std::uint32_t c0 = 2;               // audio channels
  std::uint32_t sample_rate = 44100;
  std::uint32_t window = 1024;
  std::uint32_t hop = 512;
  std::uint32_t f_kept = 384;         // frequency bins fed to the network
  std::uint32_t g = 16;               // channel increment
  std::uint32_t layers = 1;           // encoder/decoder depth
  std::uint32_t l_repeats = 3;        // path modules in the latent layer
  std::uint32_t sources = 4;
  std::uint32_t tdf_divisor = 8;      // TDF bottleneck width = f_kept / tdf_divisor
  std::uint32_t lstm_hidden = 0;      // 0 = twice the latent width
  PathMode path_mode = PathMode::Single;
  FusionMode fusion_mode = FusionMode::Joint;
  DType dtype = DType::F32;

  std::size_t spec_channels() const { return 2u * c0; }
  std::size_t width_at(std::size_t depth) const { return static_cast<std::size_t>(g) << depth; }
  std::size_t latent_width() const { return width_at(layers); }
  std::size_t tdf_width() const { return f_kept / tdf_divisor; }
  std::size_t hidden() const { return lstm_hidden ? lstm_hidden : 2 * latent_width(); }
  std::size_t latency_samples() const { return window; }

  StftConfig stft() const { return {window, hop, f_kept}; }

  /// Resolves automatic fields so the config round-trips through a file.
  ModelConfig resolved() const {
    ModelConfig c = *this;
    c.lstm_hidden = static_cast<std::uint32_t>(hidden());
    return c;
  }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError("invalid model config: " + what);
    };
    need(c0 >= 1 && g >= 1 && l_repeats >= 1 && sources >= 1 && sample_rate >= 1, "counts must be positive");
    need(layers == 1 || layers == 2, "layers must be 1 or 2");
    need(tdf_divisor >= 1 && f_kept % tdf_divisor == 0, "f_kept must be divisible by the TDF divisor");
    need(static_cast<std::uint8_t>(path_mode) <= 1 && static_cast<std::uint8_t>(fusion_mode) <= 1 &&
             static_cast<std::uint8_t>(dtype) <= 1,
         "unknown enum value");
    try {
      stft().validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("invalid model config: ") + e.what());
    }
  }

  std::string fingerprint() const {
    std::ostringstream os;
    os << "layers=" << layers << " g=" << g << " L=" << l_repeats << " S=" << sources
       << " path=" << to_string(path_mode) << " fusion=" << to_string(fusion_mode)
       << " dtype=" << to_string(dtype) << " F=" << f_kept << " win=" << window << " hop=" << hop;
    return os.str();
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace rtstt
