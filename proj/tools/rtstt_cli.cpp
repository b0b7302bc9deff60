// rtstt: command-line front end for the separation engine.
#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rtstt/rtstt.hpp"

namespace fs = std::filesystem;
using namespace rtstt;

namespace {

const std::vector<std::string> kStemNames = {"vocals", "drums", "bass", "other"};

constexpr int kExitFailure = 1;
constexpr int kExitShortRead = 3;

/// Model selection shared by every subcommand: a weight file, or seeded
/// random weights for a config assembled from flags.
struct ModelOptions {
  std::string path;
  std::uint64_t seed = 1;
  std::optional<std::uint32_t> g, layers, repeats, sources;
  std::optional<std::string> path_mode, fusion_mode, dtype;

  void attach(CLI::App& app, bool with_dtype = true) {
    app.add_option("-m,--model", path, "RTST weight file (default: seeded random weights)");
    app.add_option("--seed", seed, "Seed for random weights");
    app.add_option("--g", g, "Channel increment");
    app.add_option("--layers", layers, "Encoder/decoder depth (1 or 2)");
    app.add_option("--repeats", repeats, "Path modules in the latent layer");
    app.add_option("--sources", sources, "Number of separated sources");
    app.add_option("--path", path_mode, "Path module type: single|dual");
    app.add_option("--fusion", fusion_mode, "Decoder fusion: joint|separate");
    if (with_dtype) app.add_option("--dtype", dtype, "Precision: f32|f16");
  }

  ModelConfig apply(ModelConfig c) const {
    if (g) c.g = *g;
    if (layers) c.layers = *layers;
    if (repeats) c.l_repeats = *repeats;
    if (sources) c.sources = *sources;
    if (path_mode) c.path_mode = parse_path_mode(*path_mode);
    if (fusion_mode) c.fusion_mode = parse_fusion_mode(*fusion_mode);
    if (dtype) c.dtype = parse_dtype(*dtype);
    c.validate();
    return c;
  }

  ModelConfig config() const { return apply(ModelConfig{}).resolved(); }

  WeightSet weights() const {
    if (path.empty()) {
      const ModelConfig c = config();
      WeightSet ws = random_init(c, seed);
      return c.dtype == DType::F16 ? to_f16(ws) : ws;
    }
    WeightSet ws = load(path);
    if (!(apply(ws.config).resolved() == ws.config.resolved()))
      throw ConfigError("flags conflict with the configuration stored in " + path + " (" +
                        ws.config.fingerprint() + ")");
    return ws;
  }

  ModelGraph model() const { return ModelGraph::build(weights()); }
};

std::string stem_name(std::size_t s) { return s < kStemNames.size() ? kStemNames[s] : "source" + std::to_string(s); }

// ---------------------------------------------------------------------------

int run_demix(const ModelOptions& mo, const std::string& input, const std::string& out_dir, const std::string& fmt,
              std::size_t block_hops) {
  const ModelGraph model = mo.model();
  const AudioChunk audio = read_wav(input);
  const ModelConfig& cfg = model.config();
  if (audio.sample_rate != cfg.sample_rate)
    throw std::invalid_argument(input + ": sample rate " + std::to_string(audio.sample_rate) + " Hz, model expects " +
                                std::to_string(cfg.sample_rate) + " Hz");
  if (audio.channel_count() != cfg.c0)
    throw std::invalid_argument(input + ": " + std::to_string(audio.channel_count()) + " channels, model expects " +
                                std::to_string(cfg.c0));

  Stream stream(model);
  SourceAudio stems = SourceAudio::zeros(cfg.sources, cfg.c0, 0);
  const std::size_t block = std::max<std::size_t>(1, block_hops) * cfg.hop;
  for (std::size_t pos = 0; pos < audio.length(); pos += block) {
    const std::size_t n = std::min(block, audio.length() - pos);
    AudioChunk piece{audio.sample_rate, std::vector<std::vector<float>>(audio.channel_count())};
    for (std::size_t ch = 0; ch < audio.channel_count(); ++ch)
      piece.channels[ch].assign(audio.channels[ch].begin() + static_cast<std::ptrdiff_t>(pos),
                                audio.channels[ch].begin() + static_cast<std::ptrdiff_t>(pos + n));
    stems.append(stream.push(piece));
  }
  stems.append(stream.flush());

  const WavFormat wf = fmt == "pcm16" ? WavFormat::Pcm16 : WavFormat::Float32;
  fs::create_directories(out_dir);
  for (std::size_t s = 0; s < cfg.sources; ++s) {
    const AudioChunk a = stems.source(s, cfg.sample_rate);
    const fs::path p = fs::path(out_dir) / (stem_name(s) + ".wav");
    write_wav(p, a, wf);
    std::cout << p.string() << '\n';
  }
  return 0;
}

// Raw protocol: interleaved little-endian float32, c0 values per sample
// frame in; S*c0 values per sample frame out, source-major.
void write_stems(const SourceAudio& out, std::FILE* sink) {
  if (out.samples == 0) return;
  std::vector<float> buf(out.samples * out.sources * out.channels);
  std::size_t k = 0;
  for (std::size_t i = 0; i < out.samples; ++i)
    for (std::size_t s = 0; s < out.sources; ++s)
      for (std::size_t ch = 0; ch < out.channels; ++ch) buf[k++] = out.row(s, ch)[i];
  if (std::fwrite(buf.data(), sizeof(float), buf.size(), sink) != buf.size())
    throw std::runtime_error("write to stdout failed");
  std::fflush(sink);
}

int run_stream(const ModelOptions& mo, std::size_t block_hops) {
  const ModelGraph model = mo.model();
  const ModelConfig& cfg = model.config();
  Stream stream(model);
  const std::size_t frame_bytes = cfg.c0 * sizeof(float);
  std::vector<unsigned char> bytes(std::max<std::size_t>(1, block_hops) * cfg.hop * frame_bytes);
  std::vector<unsigned char> carry;
  AudioChunk piece{cfg.sample_rate, std::vector<std::vector<float>>(cfg.c0)};

  while (true) {
    const std::size_t got = std::fread(bytes.data(), 1, bytes.size(), stdin);
    if (got == 0) break;
    carry.insert(carry.end(), bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(got));
    const std::size_t frames = carry.size() / frame_bytes;
    for (auto& ch : piece.channels) ch.resize(frames);
    for (std::size_t i = 0; i < frames; ++i)
      for (std::size_t ch = 0; ch < cfg.c0; ++ch)
        std::memcpy(&piece.channels[ch][i], carry.data() + i * frame_bytes + ch * sizeof(float), sizeof(float));
    carry.erase(carry.begin(), carry.begin() + static_cast<std::ptrdiff_t>(frames * frame_bytes));
    write_stems(stream.push(piece), stdout);
  }
  write_stems(stream.flush(), stdout);
  if (!carry.empty()) {
    std::cerr << "rtstt stream: input ended " << carry.size() << " bytes into a sample frame\n";
    return kExitShortRead;
  }
  return 0;
}

int run_init(const ModelOptions& mo, const std::string& out) {
  const WeightSet ws = mo.weights();
  save(ws, out);
  std::cout << out << ": " << ws.config.fingerprint() << ", " << ws.parameter_count() << " parameters\n";
  return 0;
}

int run_quantize(const std::string& in, const std::string& out) {
  const WeightSet ws = load(in);
  const WeightSet half = to_f16(ws);
  save(half, out);
  std::cout << out << ": tensor payload " << ws.payload_bytes() << " -> " << half.payload_bytes() << " bytes\n";
  return 0;
}

int run_verify(const ModelOptions& mo, std::vector<std::string> suites) {
  if (suites.empty() || std::find(suites.begin(), suites.end(), "all") != suites.end())
    suites = {"causality", "streaming", "cola", "softmax", "params", "f16"};
  const WeightSet ws = mo.weights();
  const ModelGraph model = ModelGraph::build(ws);
  bool ok = true;
  for (const auto& s : suites) {
    VerifyResult r;
    if (s == "causality") {
      r = verify_causality(model);
    } else if (s == "streaming") {
      r = verify_streaming(model);
    } else if (s == "cola") {
      r = verify_cola(model.config().stft());
    } else if (s == "softmax") {
      r = verify_softmax(model);
    } else if (s == "params") {
      r = verify_params(model);
    } else if (s == "f16") {
      r = verify_f16(ws.config, mo.seed);
    } else {
      throw std::invalid_argument("unknown suite " + s);
    }
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.suite << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : kExitFailure;
}

struct BenchArgs {
  std::vector<std::string> compare;
  std::vector<std::string> dtypes;
  std::size_t iterations = 1000;
  std::size_t warmup = 50;
  std::size_t samples = 1024;
  bool json = false;
  bool trends = false;
};

std::vector<std::pair<std::string, ModelConfig>> bench_variants(const ModelConfig& base, const BenchArgs& a) {
  std::vector<std::pair<std::string, ModelConfig>> out{{"base", base}};
  auto add = [&](const std::string& label, ModelConfig c) {
    c.validate();
    out.emplace_back(label, c);
  };
  for (const auto& axis : a.compare) {
    ModelConfig c = base;
    if (axis == "path_mode") {
      c.path_mode = base.path_mode == PathMode::Single ? PathMode::Dual : PathMode::Single;
      add(std::string("path=") + to_string(c.path_mode), c);
    } else if (axis == "fusion_mode") {
      c.fusion_mode = base.fusion_mode == FusionMode::Joint ? FusionMode::Separate : FusionMode::Joint;
      add(std::string("fusion=") + to_string(c.fusion_mode), c);
    } else if (axis == "dtype") {
      c.dtype = base.dtype == DType::F32 ? DType::F16 : DType::F32;
      add(std::string("dtype=") + to_string(c.dtype), c);
    } else if (axis == "layers") {
      c.layers = base.layers == 1 ? 2 : 1;
      add("layers=" + std::to_string(c.layers), c);
    } else if (axis == "g") {
      c.g = base.g == 16 ? 8 : 16;
      add("g=" + std::to_string(c.g), c);
    } else if (axis == "l_repeats") {
      c.l_repeats = base.l_repeats + 1;
      add("L=" + std::to_string(c.l_repeats), c);
    } else {
      throw std::invalid_argument("unknown comparison axis " + axis);
    }
  }
  if (!a.dtypes.empty()) {
    out.clear();
    for (const auto& d : a.dtypes) {
      ModelConfig c = base;
      c.dtype = parse_dtype(d);
      add(std::string("dtype=") + to_string(c.dtype), c);
    }
  }
  for (auto& [label, c] : out) c = c.resolved();
  return out;
}

int run_bench(const ModelOptions& mo, const BenchArgs& a) {
  if (!mo.path.empty()) throw std::invalid_argument("bench uses seeded random weights; drop --model");
  BenchOptions bo;
  bo.iterations = a.iterations;
  bo.warmup = a.warmup;
  bo.input_samples = a.samples;
  if (bo.iterations < 100) std::cerr << "warning: fewer than 100 iterations; aggregates are unreliable\n";
  ModelConfig base = mo.apply(ModelConfig{});
  base.lstm_hidden = 0;
  const auto rows = compare_variants(bench_variants(base, a), bo, mo.seed);
  std::cout << format_table(rows);
  if (a.json) std::cout << format_json_lines(rows);

  if (!a.trends) return 0;
  bool ok = true;
  auto trend = [&](const std::string& label, ModelConfig ca, ModelConfig cb, Ordering o) {
    const ModelGraph ma = ModelGraph::random(ca.resolved(), mo.seed);
    const ModelGraph mb = ModelGraph::random(cb.resolved(), mo.seed);
    TrendOptions to;
    to.iterations_per_round = std::max<std::size_t>(1, a.iterations / to.rounds);
    to.input_samples = a.samples;
    const TrendResult r = check_trend(label, ma, mb, o, to);
    std::cout << format_trend(r) << '\n';
    ok = ok && r.holds;
  };
  ModelConfig d = base;
  d.path_mode = PathMode::Dual;
  ModelConfig s = base;
  s.fusion_mode = FusionMode::Separate;
  ModelConfig l2 = base;
  l2.layers = 2;
  ModelConfig r4 = base;
  r4.l_repeats = base.l_repeats + 1;
  trend("single < dual", base, d, Ordering::Faster);
  trend("joint <= separate", base, s, Ordering::NotSlower);
  trend("layers=2 > layers=1", l2, base, Ordering::Slower);
  trend("L+1 > L", r4, base, Ordering::Slower);
  return ok ? 0 : kExitFailure;
}

// A directory holding the stems directly is one track; otherwise each
// subdirectory is a track.
std::map<std::string, fs::path> track_dirs(const fs::path& root) {
  std::map<std::string, fs::path> out;
  if (fs::exists(root / (stem_name(0) + ".wav"))) {
    out[root.filename().string()] = root;
    return out;
  }
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) out[e.path().filename().string()] = e.path();
  if (out.empty()) throw std::invalid_argument(root.string() + " holds no stems");
  return out;
}

int run_eval(const std::string& ref, const std::string& est, std::size_t sources, double chunk_seconds, bool json) {
  const auto refs = track_dirs(ref);
  const auto ests = track_dirs(est);
  std::vector<TrackInput> tracks;
  std::vector<std::string> names;
  for (std::size_t s = 0; s < sources; ++s) names.push_back(stem_name(s));
  for (const auto& [name, dir] : refs) {
    fs::path edir;
    if (ests.size() == 1 && refs.size() == 1) {
      edir = ests.begin()->second;
    } else if (auto it = ests.find(name); it != ests.end()) {
      edir = it->second;
    } else {
      throw std::invalid_argument("no estimate for track " + name);
    }
    TrackInput t{name, {}, {}};
    for (const auto& stem : names) {
      t.references.push_back(read_wav(dir / (stem + ".wav")));
      t.estimates.push_back(read_wav(edir / (stem + ".wav")));
    }
    tracks.push_back(std::move(t));
  }
  const SdrReport rep = evaluate(tracks, names, chunk_seconds);
  std::cout << format_table(rep);
  if (json) std::cout << format_json_lines(rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Real-time music source separation"};
  app.require_subcommand(1);

  ModelOptions mo;
  std::string input, out_dir, out, in, fmt = "f32";
  std::size_t block_hops = 16;
  std::vector<std::string> suites;
  BenchArgs bench;
  std::string ref_dir, est_dir;
  std::size_t eval_sources = 4;
  double chunk_seconds = 1.0;
  bool eval_json = false;

  auto* demix = app.add_subcommand("demix", "Separate a WAV file into stems");
  mo.attach(*demix);
  demix->add_option("input", input, "Stereo 44.1 kHz WAV")->required()->check(CLI::ExistingFile);
  demix->add_option("-o,--out-dir", out_dir, "Directory for the stems")->required();
  demix->add_option("--format", fmt, "Stem sample format")->check(CLI::IsMember({"f32", "pcm16"}));
  demix->add_option("--block-hops", block_hops, "Hops per engine push");

  auto* stream = app.add_subcommand("stream", "Separate raw float32 audio from stdin to stdout");
  mo.attach(*stream);
  stream->add_option("--block-hops", block_hops, "Hops per read");

  auto* init = app.add_subcommand("init-weights", "Write seeded random weights");
  mo.attach(*init);
  init->add_option("-o,--out", out, "Output RTST file")->required();

  auto* quant = app.add_subcommand("quantize", "Convert a weight file to half precision");
  quant->add_option("input", in, "F32 RTST file")->required()->check(CLI::ExistingFile);
  quant->add_option("-o,--out", out, "Output RTST file")->required();

  auto* verify = app.add_subcommand("verify", "Run invariant suites");
  mo.attach(*verify);
  verify->add_option("suites", suites, "causality|streaming|cola|softmax|params|f16|all")
      ->check(CLI::IsMember({"causality", "streaming", "cola", "softmax", "params", "f16", "all"}));

  auto* benchcmd = app.add_subcommand("bench", "Time forward passes and compare variants");
  mo.attach(*benchcmd, false);
  benchcmd->add_option("--compare", bench.compare, "Axis to vary: path_mode|fusion_mode|dtype|layers|g|l_repeats")
      ->check(CLI::IsMember({"path_mode", "fusion_mode", "dtype", "layers", "g", "l_repeats"}));
  benchcmd->add_option("--dtype", bench.dtypes, "Precision; repeat to bench several (f32, f16)")
      ->check(CLI::IsMember({"f32", "f16"}));
  benchcmd->add_option("--iterations", bench.iterations, "Timed iterations per configuration");
  benchcmd->add_option("--warmup", bench.warmup, "Untimed iterations before timing");
  benchcmd->add_option("--samples", bench.samples, "Input samples per iteration");
  benchcmd->add_flag("--json", bench.json, "Also print JSON lines");
  benchcmd->add_flag("--trends", bench.trends, "Check the variant timing orderings; exit nonzero if one fails");

  auto* eval = app.add_subcommand("eval", "Score estimated stems against references");
  eval->add_option("--ref", ref_dir, "Reference stems directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--est", est_dir, "Estimated stems directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--sources", eval_sources, "Stems per track");
  eval->add_option("--chunk-seconds", chunk_seconds, "cSDR chunk length");
  eval->add_flag("--json", eval_json, "Also print JSON lines");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*demix) return run_demix(mo, input, out_dir, fmt, block_hops);
    if (*stream) return run_stream(mo, block_hops);
    if (*init) return run_init(mo, out);
    if (*quant) return run_quantize(in, out);
    if (*verify) return run_verify(mo, suites);
    if (*benchcmd) return run_bench(mo, bench);
    if (*eval) return run_eval(ref_dir, est_dir, eval_sources, chunk_seconds, eval_json);
  } catch (const std::exception& e) {
    std::cerr << "rtstt: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
