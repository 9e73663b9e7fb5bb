// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "cadb/audio.hpp"
#include "cadb/model.hpp"
#include "cadb/trainer.hpp"

namespace cadb {

// Everything the command-line tools need, parsed from one key-value document.
struct CliConfig {
  ModelConfig model;
  TrainConfig train;
  ToyCorpusConfig toy;
  int toy_train_examples = 16;
  int toy_val_examples = 8;

  void validate() const {
    model.validate();
    train.validate();
    check(toy_train_examples > 0 && toy_val_examples > 0,
          "config: toy corpus sizes must be positive");
  }
};

// Plain-text `key = value` lines; '#' comments; unknown keys rejected.
CliConfig parse_config_file(const std::string& path);

// Parses from an already-loaded document (used by tests).
CliConfig parse_config_text(const std::string& text, const std::string& origin);

void write_config_file(const std::string& path, const CliConfig& cfg);

}  // namespace cadb
