// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "cadb/audio.hpp"
#include "cadb/model.hpp"

namespace cadb {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Textbook Adam with bias correction over a ParameterSet.
class Adam {
 public:
  explicit Adam(ParameterSet<float>& params, AdamConfig cfg = {});

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  int64_t step_count() const { return t_; }

  // Applies one update from the gradients currently stored on the parameters.
  void step();

 private:
  ParameterSet<float>* params_;
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  int64_t t_ = 0;
};

// Scales all gradients so their global norm is at most max_norm; returns the
// pre-clip norm.
double clip_grad_norm(ParameterSet<float>& params, double max_norm);

struct TrainConfig {
  double initial_lr = 0.001;
  double lr_decay = 0.98;  // multiplicative, per epoch
  int epochs = 30;
  int batch_size = 4;
  double grad_clip_norm = 5.0;  // <= 0 disables clipping
  uint64_t seed = 1234;
  int checkpoint_every = 0;  // extra checkpoint every N steps; 0 = per-epoch only

  void validate() const {
    check(initial_lr > 0.0, "train config: initial_lr must be positive");
    check(lr_decay > 0.0 && lr_decay <= 1.0, "train config: lr_decay must lie in (0, 1]");
    check(epochs >= 1, "train config: epochs must be >= 1");
    check(batch_size >= 1, "train config: batch_size must be >= 1");
    check(checkpoint_every >= 0, "train config: checkpoint_every must be >= 0");
  }
};

struct TrainRecord {
  int epoch = 0;
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  bool has_loss = false;
  double val_sisnri = 0.0;
  bool has_val = false;
};

struct TrainResult {
  bool aborted_nan = false;
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::string metrics_path;
  double best_val_sisnri = 0.0;
  std::vector<TrainRecord> records;
};

// Ready-to-train example pair (already mixed, cast to float).
struct TrainExample {
  std::vector<float> noisy;
  std::vector<float> clean;
  double snr_db = 0.0;
};

// Deterministic mixing of a MixtureSpec (noise looped/trimmed to the clean
// length with a seed-derived offset).
TrainExample prepare_example(const MixtureSpec& spec, uint64_t seed, uint64_t index);

std::vector<TrainExample> prepare_corpus(const std::vector<MixtureSpec>& corpus,
                                         uint64_t seed);

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::vector<MixtureSpec>& train_set,
                  const std::vector<MixtureSpec>& val_set, const std::string& out_dir);

struct EvalRow {
  double snr_db = 0.0;
  double sisnri = 0.0;
  double sdri = 0.0;
};

struct EvalBucket {
  double snr_db = 0.0;
  double mean_sisnri = 0.0;
  double mean_sdri = 0.0;
  int count = 0;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  std::vector<EvalBucket> buckets;  // sorted by SNR
  double mean_sisnri = 0.0;
  double mean_sdri = 0.0;
};

EvalResult evaluate(Model<float>& model, const std::vector<TrainExample>& examples);

// Identity enhancer baseline (output == input mixture).
EvalResult evaluate_identity(const std::vector<TrainExample>& examples);

double mean_validation_sisnri(Model<float>& model, const std::vector<TrainExample>& examples);

}  // namespace cadb
