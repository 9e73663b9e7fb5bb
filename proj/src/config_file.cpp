// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cadb/config_file.hpp"

#include <fstream>
#include <sstream>

#include "cadb/config_kv.hpp"

namespace cadb {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

bool apply_train_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_int;
  using detail::parse_real;
  if (key == "initial_lr") cfg.initial_lr = parse_real(key, value);
  else if (key == "lr_decay") cfg.lr_decay = parse_real(key, value);
  else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(key, value));
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "grad_clip_norm") cfg.grad_clip_norm = parse_real(key, value);
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_int(key, value));
  else if (key == "checkpoint_every")
    cfg.checkpoint_every = static_cast<int>(parse_int(key, value));
  else return false;
  return true;
}

bool apply_toy_key(CliConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_int;
  using detail::parse_real;
  if (key == "toy_train_examples")
    cfg.toy_train_examples = static_cast<int>(parse_int(key, value));
  else if (key == "toy_val_examples")
    cfg.toy_val_examples = static_cast<int>(parse_int(key, value));
  else if (key == "toy_segment_seconds")
    cfg.toy.segment_seconds = parse_real(key, value);
  else if (key == "toy_noise") {
    if (value == "white") cfg.toy.noise = NoiseKind::White;
    else if (value == "pink") cfg.toy.noise = NoiseKind::Pink;
    else fail("config key 'toy_noise': expected white or pink, got '" + value + "'");
  } else return false;
  return true;
}

}  // namespace

CliConfig parse_config_text(const std::string& text, const std::string& origin) {
  CliConfig cfg;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" +
           line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      fail(origin + ":" + std::to_string(lineno) + ": empty key or value");
    if (apply_model_config_key(cfg.model, key, value)) continue;
    if (apply_train_key(cfg.train, key, value)) continue;
    if (apply_toy_key(cfg, key, value)) continue;
    fail(origin + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
  }
  cfg.toy.seed = cfg.train.seed;
  cfg.toy.sample_rate = cfg.model.stft.sample_rate;
  cfg.validate();
  return cfg;
}

CliConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

void write_config_file(const std::string& path, const CliConfig& cfg) {
  std::ofstream out(path);
  if (!out) fail("config: cannot open '" + path + "' for writing");
  for (const auto& [k, v] : model_config_kv(cfg.model)) out << k << " = " << v << "\n";
  out << "initial_lr = " << format_double(cfg.train.initial_lr) << "\n";
  out << "lr_decay = " << format_double(cfg.train.lr_decay) << "\n";
  out << "epochs = " << cfg.train.epochs << "\n";
  out << "batch_size = " << cfg.train.batch_size << "\n";
  out << "grad_clip_norm = " << format_double(cfg.train.grad_clip_norm) << "\n";
  out << "seed = " << cfg.train.seed << "\n";
  out << "checkpoint_every = " << cfg.train.checkpoint_every << "\n";
  out << "toy_train_examples = " << cfg.toy_train_examples << "\n";
  out << "toy_val_examples = " << cfg.toy_val_examples << "\n";
  out << "toy_segment_seconds = " << format_double(cfg.toy.segment_seconds) << "\n";
  out << "toy_noise = " << (cfg.toy.noise == NoiseKind::White ? "white" : "pink") << "\n";
}

}  // namespace cadb
