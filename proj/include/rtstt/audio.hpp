#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rtstt {

/// Multichannel waveform at a fixed sample rate; channels share one length.
struct AudioChunk {
  std::uint32_t sample_rate = 44100;
  std::vector<std::vector<float>> channels;

  static AudioChunk silence(std::size_t channel_count, std::size_t length,
                            std::uint32_t rate = 44100) {
    return {rate, std::vector<std::vector<float>>(channel_count, std::vector<float>(length, 0.0f))};
  }

  std::size_t channel_count() const { return channels.size(); }
  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }

  void validate() const {
    for (const auto& ch : channels) {
      if (ch.size() != length()) throw std::invalid_argument("audio channels differ in length");
    }
  }
};

enum class WavErrorCode { Io, Malformed, UnsupportedCodec, UnsupportedLayout };

class WavError : public std::runtime_error {
 public:
  WavError(WavErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  WavErrorCode code() const { return code_; }

 private:
  WavErrorCode code_;
};

enum class WavFormat { Pcm16, Float32 };

namespace detail {

inline std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace detail

/// Parses an in-memory RIFF/WAVE image. Supports PCM 16/24-bit and IEEE
/// float 32-bit, mono or stereo. Chunks other than fmt and data are skipped.
inline AudioChunk parse_wav(const std::vector<std::uint8_t>& bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavError(WavErrorCode::Malformed, "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format_tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t len = read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (len > bytes.size() - body) {
      // tolerate an oversized data chunk length (streamed writers), nothing else
      if (std::memcmp(hdr, "data", 4) != 0) throw WavError(WavErrorCode::Malformed, "chunk overruns file");
    }
    const std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (avail < 16) throw WavError(WavErrorCode::Malformed, "fmt chunk too short");
      const std::uint8_t* f = bytes.data() + body;
      format_tag = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format_tag == 0xFFFE) {
        if (avail < 26) throw WavError(WavErrorCode::Malformed, "extensible fmt chunk too short");
        format_tag = read_u16(f + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + avail + (avail & 1u);
  }

  if (!have_fmt || data == nullptr) throw WavError(WavErrorCode::Malformed, "missing fmt or data chunk");
  if (channels != 1 && channels != 2) {
    throw WavError(WavErrorCode::UnsupportedLayout,
                   "unsupported channel count " + std::to_string(channels));
  }
  const bool pcm = format_tag == 1 && (bits == 16 || bits == 24);
  const bool ieee = format_tag == 3 && bits == 32;
  if (!pcm && !ieee) {
    throw WavError(WavErrorCode::UnsupportedCodec, "unsupported codec: format " +
                                                       std::to_string(format_tag) + ", " +
                                                       std::to_string(bits) + " bits");
  }
  if (rate == 0) throw WavError(WavErrorCode::Malformed, "zero sample rate");

  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  AudioChunk chunk{rate, std::vector<std::vector<float>>(channels, std::vector<float>(frames))};
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + (i * channels + c) * width;
      float v;
      if (ieee) {
        std::memcpy(&v, p, 4);
      } else if (bits == 16) {
        v = static_cast<float>(static_cast<std::int16_t>(read_u16(p))) / 32768.0f;
      } else {
        std::int32_t s = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
        if (s & 0x800000) s -= 0x1000000;
        v = static_cast<float>(s) / 8388608.0f;
      }
      chunk.channels[c][i] = v;
    }
  }
  return chunk;
}

inline AudioChunk read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError(WavErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_wav(bytes);
}

/// Serializes a chunk as canonical 44-byte-header RIFF/WAVE. PCM16 clips to
/// [-1, 1) before scaling; float32 is lossless.
inline std::vector<std::uint8_t> encode_wav(const AudioChunk& chunk, WavFormat format) {
  using detail::put_u16;
  using detail::put_u32;
  chunk.validate();
  const std::uint16_t channels = static_cast<std::uint16_t>(chunk.channel_count());
  if (channels != 1 && channels != 2) {
    throw WavError(WavErrorCode::UnsupportedLayout, "only mono or stereo can be written");
  }
  const std::uint16_t bits = format == WavFormat::Pcm16 ? 16 : 32;
  const std::uint16_t block = static_cast<std::uint16_t>(channels * bits / 8);
  const std::uint32_t data_len = static_cast<std::uint32_t>(chunk.length() * block);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, format == WavFormat::Pcm16 ? 1 : 3);
  put_u16(out, channels);
  put_u32(out, chunk.sample_rate);
  put_u32(out, chunk.sample_rate * block);
  put_u16(out, block);
  put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);

  for (std::size_t i = 0; i < chunk.length(); ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float v = chunk.channels[c][i];
      if (format == WavFormat::Float32) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        put_u32(out, u);
      } else {
        const float clipped = std::clamp(v, -1.0f, 32767.0f / 32768.0f);
        const auto s = static_cast<std::int16_t>(std::lround(clipped * 32768.0f));
        put_u16(out, static_cast<std::uint16_t>(s));
      }
    }
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioChunk& chunk, WavFormat format) {
  const auto bytes = encode_wav(chunk, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WavError(WavErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WavError(WavErrorCode::Io, "write failed for " + path.string());
}

}  // namespace rtstt
