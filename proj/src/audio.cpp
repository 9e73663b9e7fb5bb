// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cadb/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cadb {

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF),
                     static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
  out.write(b, 2);
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatIeeeFloat = 3;

}  // namespace

WavData load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("load_wav: cannot open '" + path + "'");

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    fail("load_wav: '" + path + "' is not a RIFF file");
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    fail("load_wav: '" + path + "' is not a WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<unsigned char> payload;
  bool have_data = false;

  while (in) {
    in.read(tag, 4);
    if (!in) break;
    const uint32_t size = read_u32(in);
    if (!in) fail("load_wav: truncated chunk header in '" + path + "'");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) fail("load_wav: fmt chunk too small in '" + path + "'");
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      in.seekg(size - 16 + (size % 2), std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      payload.resize(size);
      if (size > 0) in.read(reinterpret_cast<char*>(payload.data()), size);
      if (!in && size > 0) fail("load_wav: truncated data chunk in '" + path + "'");
      if (size % 2) in.seekg(1, std::ios::cur);
      have_data = true;
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
    }
  }
  if (!have_fmt) fail("load_wav: missing fmt chunk in '" + path + "'");
  if (!have_data) fail("load_wav: missing data chunk in '" + path + "'");
  if (channels < 1) fail("load_wav: zero channels in '" + path + "'");

  WavData wav;
  wav.sample_rate = static_cast<int>(sample_rate);
  if (format == kFormatPcm && bits == 16) {
    const size_t frame_bytes = 2ull * channels;
    const size_t frames = payload.size() / frame_bytes;
    wav.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
      const unsigned char* p = payload.data() + i * frame_bytes;
      const int16_t v = static_cast<int16_t>(p[0] | (p[1] << 8));
      wav.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == kFormatIeeeFloat && bits == 32) {
    const size_t frame_bytes = 4ull * channels;
    const size_t frames = payload.size() / frame_bytes;
    wav.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
      float v;
      std::memcpy(&v, payload.data() + i * frame_bytes, 4);
      wav.samples[i] = static_cast<double>(v);
    }
  } else {
    fail("load_wav: unsupported codec in '" + path + "' (format tag " +
         std::to_string(format) + ", " + std::to_string(bits) +
         " bits; PCM16 and float32 are supported)");
  }
  return wav;
}

void save_wav(const std::string& path, const std::vector<double>& samples,
              int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("save_wav: cannot open '" + path + "' for writing");

  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, kFormatPcm);
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(sample_rate));
  write_u32(out, static_cast<uint32_t>(sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (double s : samples) {
    double q = std::round(s * 32768.0);  // round halves away from zero
    q = std::min(32767.0, std::max(-32768.0, q));
    const int16_t v = static_cast<int16_t>(q);
    const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
    out.write(b, 2);
  }
  if (!out) fail("save_wav: write failed for '" + path + "'");
}

MixResult mix_at_snr(const std::vector<double>& clean, const std::vector<double>& noise,
                     double snr_db) {
  check(clean.size() == noise.size(),
        "mix_at_snr: length mismatch " + std::to_string(clean.size()) + " vs " +
            std::to_string(noise.size()));
  check(!clean.empty(), "mix_at_snr: empty input");
  double p_clean = 0.0, p_noise = 0.0;
  for (double v : clean) p_clean += v * v;
  for (double v : noise) p_noise += v * v;
  p_clean /= static_cast<double>(clean.size());
  p_noise /= static_cast<double>(noise.size());
  if (!(p_clean > 0.0)) fail("mix_at_snr: silent clean segment");
  if (!(p_noise > 0.0)) fail("mix_at_snr: silent noise segment");

  const double gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  MixResult r;
  r.scaled_noise.resize(noise.size());
  r.noisy.resize(noise.size());
  for (size_t i = 0; i < noise.size(); ++i) {
    r.scaled_noise[i] = gain * noise[i];
    r.noisy[i] = clean[i] + r.scaled_noise[i];
  }
  return r;
}

std::vector<double> loop_to_length(const std::vector<double>& x, size_t n,
                                   uint64_t offset_seed) {
  check(!x.empty(), "loop_to_length: empty source");
  std::vector<double> out(n);
  size_t start = 0;
  if (x.size() > n) {
    Rng rng(offset_seed);
    start = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(x.size() - n + 1)));
  } else if (x.size() < n) {
    Rng rng(offset_seed);
    start = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(x.size())));
  }
  for (size_t i = 0; i < n; ++i) out[i] = x[(start + i) % x.size()];
  return out;
}

namespace {

std::vector<double> make_noise(Rng& rng, size_t n, NoiseKind kind) {
  std::vector<double> noise(n);
  if (kind == NoiseKind::White) {
    for (auto& v : noise) v = rng.normal();
  } else {
    // Paul Kellet's economy pink filter over white noise.
    double b0 = 0, b1 = 0, b2 = 0;
    for (auto& v : noise) {
      const double w = rng.normal();
      b0 = 0.99765 * b0 + w * 0.0990460;
      b1 = 0.96300 * b1 + w * 0.2965164;
      b2 = 0.57000 * b2 + w * 1.0526913;
      v = b0 + b1 + b2 + w * 0.1848;
    }
  }
  return noise;
}

}  // namespace

std::vector<MixtureSpec> make_toy_corpus(const ToyCorpusConfig& config) {
  check(config.num_examples > 0, "make_toy_corpus: num_examples must be positive");
  check(config.min_tones >= 1 && config.max_tones >= config.min_tones,
        "make_toy_corpus: bad tone count range");
  check(config.f0_max_hz * config.max_tones < config.sample_rate / 2.0,
        "make_toy_corpus: harmonics exceed Nyquist");
  const size_t n =
      static_cast<size_t>(config.segment_seconds * static_cast<double>(config.sample_rate));
  std::vector<MixtureSpec> corpus;
  corpus.reserve(static_cast<size_t>(config.num_examples));
  const auto& grid = snr_grid_db();
  for (int ex = 0; ex < config.num_examples; ++ex) {
    Rng rng(mix_seed(config.seed, static_cast<uint64_t>(ex)));
    MixtureSpec spec;
    spec.sample_rate = config.sample_rate;
    spec.segment_seconds = config.segment_seconds;
    spec.snr_db = grid[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(grid.size())))];

    const double f0 = rng.uniform(config.f0_min_hz, config.f0_max_hz);
    const int tones =
        config.min_tones +
        static_cast<int>(rng.uniform_int(config.max_tones - config.min_tones + 1));
    std::vector<double> amps(static_cast<size_t>(tones));
    std::vector<double> phases(static_cast<size_t>(tones));
    for (int t = 0; t < tones; ++t) {
      amps[static_cast<size_t>(t)] = rng.uniform(0.5, 1.0) / static_cast<double>(t + 1);
      phases[static_cast<size_t>(t)] = rng.uniform(0.0, 2.0 * M_PI);
    }
    const double env_freq = rng.uniform(0.5, 2.0);
    const double env_phase = rng.uniform(0.0, 2.0 * M_PI);

    spec.clean.resize(n);
    double peak = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / config.sample_rate;
      double v = 0.0;
      for (int h = 0; h < tones; ++h)
        v += amps[static_cast<size_t>(h)] *
             std::sin(2.0 * M_PI * f0 * (h + 1) * t + phases[static_cast<size_t>(h)]);
      v *= 0.6 + 0.4 * std::sin(2.0 * M_PI * env_freq * t + env_phase);
      spec.clean[i] = v;
      peak = std::max(peak, std::fabs(v));
    }
    const double norm = peak > 0.0 ? 0.5 / peak : 1.0;
    for (auto& v : spec.clean) v *= norm;

    spec.noise = make_noise(rng, n, config.noise);
    corpus.push_back(std::move(spec));
  }
  return corpus;
}

Segmented segment(const std::vector<double>& x, double seconds, double hop_seconds,
                  int sample_rate) {
  check(seconds > 0.0, "segment: seconds must be positive");
  Segmented s;
  s.original_length = x.size();
  s.segment_length = static_cast<size_t>(seconds * sample_rate);
  check(s.segment_length > 0, "segment: zero-length segments");
  s.hop_length = hop_seconds > 0.0 ? static_cast<size_t>(hop_seconds * sample_rate)
                                   : s.segment_length;
  check(s.hop_length > 0, "segment: zero hop");

  size_t offset = 0;
  do {
    std::vector<double> seg(s.segment_length, 0.0);
    const size_t avail = x.size() > offset ? std::min(s.segment_length, x.size() - offset) : 0;
    std::copy(x.begin() + static_cast<long>(offset),
              x.begin() + static_cast<long>(offset + avail), seg.begin());
    s.segments.push_back(std::move(seg));
    offset += s.hop_length;
  } while (offset < x.size());
  return s;
}

std::vector<double> reassemble(const Segmented& s) {
  check(s.hop_length == s.segment_length, "reassemble: only non-overlapping segments");
  std::vector<double> out;
  out.reserve(s.segments.size() * s.segment_length);
  for (const auto& seg : s.segments) out.insert(out.end(), seg.begin(), seg.end());
  out.resize(s.original_length);
  return out;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("load_manifest: cannot open '" + path + "'");
  std::vector<ManifestEntry> entries;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ManifestEntry e;
    if (!(ss >> e.clean_path >> e.noise_path >> e.snr_db))
      fail("load_manifest: malformed line " + std::to_string(lineno) + " in '" + path +
           "' (expected: clean_path noise_path snr_db)");
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace cadb
