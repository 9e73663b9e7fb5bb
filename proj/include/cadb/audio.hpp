// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cadb/common.hpp"

namespace cadb {

// --- WAV I/O (RIFF, PCM16 / IEEE float32, mono or first channel) ------------

struct WavData {
  std::vector<double> samples;  // scaled to [-1, 1]
  int sample_rate = 0;
};

WavData load_wav(const std::string& path);

// Writes PCM 16-bit mono with round-half-away-from-zero quantization.
void save_wav(const std::string& path, const std::vector<double>& samples,
              int sample_rate);

// --- SNR-controlled mixing ---------------------------------------------------

inline const std::vector<double>& snr_grid_db() {
  static const std::vector<double> grid = {-5.0, 0.0, 5.0, 10.0, 15.0, 20.0};
  return grid;
}

struct MixtureSpec {
  std::vector<double> clean;
  std::vector<double> noise;
  double snr_db = 0.0;
  double segment_seconds = 4.0;
  int sample_rate = 16000;
};

struct MixResult {
  std::vector<double> noisy;
  std::vector<double> scaled_noise;
};

// noisy = clean + g * noise with g chosen so the clean/noise power ratio hits
// snr_db exactly. Lengths must already match.
MixResult mix_at_snr(const std::vector<double>& clean, const std::vector<double>& noise,
                     double snr_db);

// Loops (with a deterministic seed-derived start offset) or trims to length n.
std::vector<double> loop_to_length(const std::vector<double>& x, size_t n,
                                   uint64_t offset_seed);

// --- synthetic toy corpus ----------------------------------------------------

enum class NoiseKind { White, Pink };

struct ToyCorpusConfig {
  int num_examples = 24;
  uint64_t seed = 1;
  int min_tones = 1;
  int max_tones = 3;
  double f0_min_hz = 100.0;
  double f0_max_hz = 500.0;
  NoiseKind noise = NoiseKind::White;
  double segment_seconds = 1.0;
  int sample_rate = 16000;
};

// Harmonic tones with a slow amplitude envelope plus white/pink noise, SNR
// drawn uniformly from the mixing grid. Pure function of (config, seed).
std::vector<MixtureSpec> make_toy_corpus(const ToyCorpusConfig& config);

// --- segmentation -------------------------------------------------------------

struct Segmented {
  std::vector<std::vector<double>> segments;
  size_t original_length = 0;
  size_t segment_length = 0;
  size_t hop_length = 0;
};

Segmented segment(const std::vector<double>& x, double seconds, double hop_seconds,
                  int sample_rate);

// Inverse of segment() for the non-overlapping case.
std::vector<double> reassemble(const Segmented& s);

// --- corpus manifest (real-data mode) -----------------------------------------

struct ManifestEntry {
  std::string clean_path;
  std::string noise_path;
  double snr_db = 0.0;
};

std::vector<ManifestEntry> load_manifest(const std::string& path);

}  // namespace cadb
