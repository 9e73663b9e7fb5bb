// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Key-value serialization of the model configuration, shared by checkpoint
// headers and the CLI config file.

#pragma once

#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cadb/model.hpp"

namespace cadb {

inline Window parse_window(const std::string& s) {
  if (s == "hann_sqrt") return Window::HannSqrt;
  if (s == "hann") return Window::Hann;
  if (s == "hamming") return Window::Hamming;
  fail("unknown window '" + s + "' (expected hann_sqrt, hann, or hamming)");
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::vector<std::pair<std::string, std::string>> model_config_kv(
    const ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("channels", std::to_string(cfg.channels));
  kv.emplace_back("num_blocks", std::to_string(cfg.num_blocks));
  kv.emplace_back("dense_depth", std::to_string(cfg.dense_depth));
  kv.emplace_back("attention_heads", std::to_string(cfg.attention_heads));
  kv.emplace_back("conformer_kernel", std::to_string(cfg.conformer_kernel));
  kv.emplace_back("ffn_expansion", std::to_string(cfg.ffn_expansion));
  kv.emplace_back("alpha", format_double(cfg.alpha));
  kv.emplace_back("beta", format_double(cfg.beta));
  kv.emplace_back("enable_cfb", cfg.enable_cfb ? "true" : "false");
  kv.emplace_back("enable_t_conformer", cfg.enable_t_conformer ? "true" : "false");
  kv.emplace_back("enable_f_conformer", cfg.enable_f_conformer ? "true" : "false");
  kv.emplace_back("compression", format_double(cfg.compression));
  kv.emplace_back("sample_rate", std::to_string(cfg.stft.sample_rate));
  kv.emplace_back("n_fft", std::to_string(cfg.stft.n_fft));
  kv.emplace_back("win_length", std::to_string(cfg.stft.win_length));
  kv.emplace_back("hop_length", std::to_string(cfg.stft.hop_length));
  kv.emplace_back("window", window_name(cfg.stft.window));
  return kv;
}

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail("config key '" + key + "': expected boolean, got '" + value + "'");
}

inline int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    check(pos == value.size(), "trailing characters");
    return static_cast<int64_t>(v);
  } catch (const std::exception&) {
    fail("config key '" + key + "': expected integer, got '" + value + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    check(pos == value.size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    fail("config key '" + key + "': expected real number, got '" + value + "'");
  }
}

}  // namespace detail

// Returns false for keys that do not belong to the model config.
inline bool apply_model_config_key(ModelConfig& cfg, const std::string& key,
                                   const std::string& value) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_real;
  if (key == "channels") cfg.channels = parse_int(key, value);
  else if (key == "num_blocks") cfg.num_blocks = parse_int(key, value);
  else if (key == "dense_depth") cfg.dense_depth = parse_int(key, value);
  else if (key == "attention_heads") cfg.attention_heads = parse_int(key, value);
  else if (key == "conformer_kernel") cfg.conformer_kernel = parse_int(key, value);
  else if (key == "ffn_expansion") cfg.ffn_expansion = parse_int(key, value);
  else if (key == "alpha") cfg.alpha = parse_real(key, value);
  else if (key == "beta") cfg.beta = parse_real(key, value);
  else if (key == "enable_cfb") cfg.enable_cfb = parse_bool(key, value);
  else if (key == "enable_t_conformer") cfg.enable_t_conformer = parse_bool(key, value);
  else if (key == "enable_f_conformer") cfg.enable_f_conformer = parse_bool(key, value);
  else if (key == "compression") cfg.compression = parse_real(key, value);
  else if (key == "sample_rate") cfg.stft.sample_rate = static_cast<int>(parse_int(key, value));
  else if (key == "n_fft") cfg.stft.n_fft = parse_int(key, value);
  else if (key == "win_length") cfg.stft.win_length = parse_int(key, value);
  else if (key == "hop_length") cfg.stft.hop_length = parse_int(key, value);
  else if (key == "window") cfg.stft.window = parse_window(value);
  else return false;
  return true;
}

}  // namespace cadb
