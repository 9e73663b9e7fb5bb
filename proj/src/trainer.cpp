// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cadb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "cadb/checkpoint.hpp"
#include "cadb/metrics.hpp"

namespace cadb {

Adam::Adam(ParameterSet<float>& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
  for (const auto& item : params.items()) {
    m_.emplace_back(static_cast<size_t>(item.tensor.numel()), 0.0f);
    v_.emplace_back(static_cast<size_t>(item.tensor.numel()), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(cfg_.beta1);
  const float b2 = static_cast<float>(cfg_.beta2);
  const auto& items = params_->items();
  for (size_t i = 0; i < items.size(); ++i) {
    Tensor<float> t = items[i].tensor;  // handle shares storage
    const auto& g = t.grad_view();
    if (g.empty()) continue;  // parameter unused this step
    float* p = t.data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k]))
        fail("adam: non-finite gradient in parameter '" + items[i].name + "'");
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      const double m_hat = static_cast<double>(m[k]) / bc1;
      const double v_hat = static_cast<double>(v[k]) / bc2;
      p[k] -= static_cast<float>(cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
    }
  }
}

double clip_grad_norm(ParameterSet<float>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& item : params.items())
    for (float g : item.tensor.grad_view()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (const auto& item : params.items()) {
      Tensor<float> t = item.tensor;
      if (!t.has_grad()) continue;
      for (float& g : t.grad_buffer()) g *= scale;
    }
  }
  return norm;
}

TrainExample prepare_example(const MixtureSpec& spec, uint64_t seed, uint64_t index) {
  check(!spec.clean.empty(), "prepare_example: empty clean signal");
  std::vector<double> noise = spec.noise;
  if (noise.size() != spec.clean.size())
    noise = loop_to_length(noise, spec.clean.size(), mix_seed(seed, index));
  MixResult mixed = mix_at_snr(spec.clean, noise, spec.snr_db);
  TrainExample ex;
  ex.snr_db = spec.snr_db;
  ex.noisy.resize(spec.clean.size());
  ex.clean.resize(spec.clean.size());
  for (size_t i = 0; i < spec.clean.size(); ++i) {
    ex.noisy[i] = static_cast<float>(mixed.noisy[i]);
    ex.clean[i] = static_cast<float>(spec.clean[i]);
  }
  return ex;
}

std::vector<TrainExample> prepare_corpus(const std::vector<MixtureSpec>& corpus,
                                         uint64_t seed) {
  std::vector<TrainExample> out;
  out.reserve(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i)
    out.push_back(prepare_example(corpus[i], seed, static_cast<uint64_t>(i)));
  return out;
}

namespace {

Tensor<float> stack_rows(const std::vector<TrainExample>& examples,
                         const std::vector<size_t>& idx, bool noisy) {
  const int64_t B = static_cast<int64_t>(idx.size());
  const int64_t L = static_cast<int64_t>(examples[idx[0]].noisy.size());
  Tensor<float> out({B, L});
  for (int64_t b = 0; b < B; ++b) {
    const auto& src = noisy ? examples[idx[static_cast<size_t>(b)]].noisy
                            : examples[idx[static_cast<size_t>(b)]].clean;
    check(static_cast<int64_t>(src.size()) == L, "train: ragged example lengths");
    std::copy(src.begin(), src.end(), out.data() + b * L);
  }
  return out;
}

std::string format_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_record(std::ofstream& out, const TrainRecord& r) {
  out << r.epoch << "," << r.step << "," << format_num(r.lr) << ","
      << (r.has_loss ? format_num(r.loss) : "-") << ","
      << (r.has_val ? format_num(r.val_sisnri) : "-") << "\n";
  out.flush();
}

}  // namespace

double mean_validation_sisnri(Model<float>& model, const std::vector<TrainExample>& examples) {
  check(!examples.empty(), "validation: empty example set");
  double acc = 0.0;
  for (const auto& ex : examples) {
    const int64_t L = static_cast<int64_t>(ex.noisy.size());
    Tensor<float> noisy({1, L}, std::vector<float>(ex.noisy.begin(), ex.noisy.end()));
    Tensor<float> enhanced = model.forward(noisy);
    Tensor<float> clean({L}, std::vector<float>(ex.clean.begin(), ex.clean.end()));
    Tensor<float> noisy1({L}, std::vector<float>(ex.noisy.begin(), ex.noisy.end()));
    Tensor<float> enh1({L}, std::vector<float>(enhanced.vec()));
    acc += si_snr_improvement(enh1, noisy1, clean);
  }
  return acc / static_cast<double>(examples.size());
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::vector<MixtureSpec>& train_set,
                  const std::vector<MixtureSpec>& val_set, const std::string& out_dir) {
  model_cfg.validate();
  train_cfg.validate();
  check(!train_set.empty(), "train: empty training corpus");
  check(!val_set.empty(), "train: empty validation corpus");
  std::filesystem::create_directories(out_dir);

  Model<float> model(model_cfg);
  model.init_parameters(train_cfg.seed);
  model.parameters().set_requires_grad(true);

  std::vector<TrainExample> train_ex = prepare_corpus(train_set, train_cfg.seed);
  std::vector<TrainExample> val_ex = prepare_corpus(val_set, train_cfg.seed + 0x5EED);

  TrainResult result;
  result.metrics_path = out_dir + "/metrics.csv";
  result.best_checkpoint = out_dir + "/best.ckpt";
  result.last_checkpoint = out_dir + "/last.ckpt";

  std::ofstream metrics(result.metrics_path);
  if (!metrics) fail("train: cannot open '" + result.metrics_path + "' for writing");
  metrics << "epoch,step,lr,loss,val_sisnri\n";

  AdamConfig adam_cfg;
  adam_cfg.lr = train_cfg.initial_lr;
  Adam opt(model.parameters(), adam_cfg);

  save_checkpoint(result.last_checkpoint, model);

  // epoch-0 record: validation of the untrained model
  {
    TrainRecord r;
    r.epoch = 0;
    r.step = 0;
    r.lr = train_cfg.initial_lr;
    r.val_sisnri = mean_validation_sisnri(model, val_ex);
    r.has_val = true;
    result.records.push_back(r);
    write_record(metrics, r);
    result.best_val_sisnri = r.val_sisnri;
    save_checkpoint(result.best_checkpoint, model);
  }

  int64_t global_step = 0;
  double lr = train_cfg.initial_lr;
  std::vector<size_t> order(train_ex.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(train_cfg.seed, 0xE000 + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double epoch_loss = 0.0;
    int64_t epoch_batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(train_cfg.batch_size)) {
      std::vector<size_t> idx(order.begin() + static_cast<long>(start),
                              order.begin() +
                                  static_cast<long>(std::min(order.size(),
                                                             start + static_cast<size_t>(
                                                                         train_cfg.batch_size))));
      Tensor<float> noisy = stack_rows(train_ex, idx, true);
      Tensor<float> clean = stack_rows(train_ex, idx, false);

      double loss_value;
      {
        Tape<float> tape;
        model.parameters().zero_grads();
        Tensor<float> enhanced = model.forward(noisy);
        Tensor<float> loss = si_snr_loss(enhanced, clean);
        loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) {
          result.aborted_nan = true;
          TrainRecord r;
          r.epoch = epoch;
          r.step = global_step;
          r.lr = lr;
          r.loss = loss_value;
          r.has_loss = true;
          result.records.push_back(r);
          write_record(metrics, r);
          return result;  // last-good checkpoint stays on disk
        }
        backward(loss);
      }
      clip_grad_norm(model.parameters(), train_cfg.grad_clip_norm);
      opt.set_lr(lr);
      opt.step();
      ++global_step;
      epoch_loss += loss_value;
      ++epoch_batches;

      TrainRecord r;
      r.epoch = epoch;
      r.step = global_step;
      r.lr = lr;
      r.loss = loss_value;
      r.has_loss = true;
      result.records.push_back(r);
      write_record(metrics, r);

      if (train_cfg.checkpoint_every > 0 &&
          global_step % train_cfg.checkpoint_every == 0)
        save_checkpoint(result.last_checkpoint, model);
    }

    const double val = mean_validation_sisnri(model, val_ex);
    TrainRecord r;
    r.epoch = epoch;
    r.step = global_step;
    r.lr = lr;
    r.loss = epoch_loss / static_cast<double>(std::max<int64_t>(1, epoch_batches));
    r.has_loss = true;
    r.val_sisnri = val;
    r.has_val = true;
    result.records.push_back(r);
    write_record(metrics, r);

    save_checkpoint(result.last_checkpoint, model);
    if (val > result.best_val_sisnri) {
      result.best_val_sisnri = val;
      save_checkpoint(result.best_checkpoint, model);
    }
    lr *= train_cfg.lr_decay;
  }
  return result;
}

namespace {

EvalResult summarize(std::vector<EvalRow> rows) {
  EvalResult res;
  res.rows = std::move(rows);
  std::map<double, EvalBucket> buckets;
  for (const auto& r : res.rows) {
    auto& b = buckets[r.snr_db];
    b.snr_db = r.snr_db;
    b.mean_sisnri += r.sisnri;
    b.mean_sdri += r.sdri;
    b.count += 1;
    res.mean_sisnri += r.sisnri;
    res.mean_sdri += r.sdri;
  }
  for (auto& [snr, b] : buckets) {
    b.mean_sisnri /= b.count;
    b.mean_sdri /= b.count;
    res.buckets.push_back(b);
  }
  if (!res.rows.empty()) {
    res.mean_sisnri /= static_cast<double>(res.rows.size());
    res.mean_sdri /= static_cast<double>(res.rows.size());
  }
  return res;
}

}  // namespace

EvalResult evaluate(Model<float>& model, const std::vector<TrainExample>& examples) {
  std::vector<EvalRow> rows;
  rows.reserve(examples.size());
  for (const auto& ex : examples) {
    const int64_t L = static_cast<int64_t>(ex.noisy.size());
    Tensor<float> noisy2({1, L}, std::vector<float>(ex.noisy.begin(), ex.noisy.end()));
    Tensor<float> enhanced2 = model.forward(noisy2);
    Tensor<float> enhanced({L}, std::vector<float>(enhanced2.vec()));
    Tensor<float> noisy({L}, std::vector<float>(ex.noisy.begin(), ex.noisy.end()));
    Tensor<float> clean({L}, std::vector<float>(ex.clean.begin(), ex.clean.end()));
    EvalRow row;
    row.snr_db = ex.snr_db;
    row.sisnri = si_snr_improvement(enhanced, noisy, clean);
    row.sdri = sdri(enhanced, noisy, clean).value;
    rows.push_back(row);
  }
  return summarize(std::move(rows));
}

EvalResult evaluate_identity(const std::vector<TrainExample>& examples) {
  std::vector<EvalRow> rows;
  rows.reserve(examples.size());
  for (const auto& ex : examples) {
    const int64_t L = static_cast<int64_t>(ex.noisy.size());
    Tensor<float> noisy({L}, std::vector<float>(ex.noisy.begin(), ex.noisy.end()));
    Tensor<float> clean({L}, std::vector<float>(ex.clean.begin(), ex.clean.end()));
    EvalRow row;
    row.snr_db = ex.snr_db;
    row.sisnri = si_snr_improvement(noisy, noisy, clean);
    row.sdri = sdri(noisy, noisy, clean).value;
    rows.push_back(row);
  }
  return summarize(std::move(rows));
}

}  // namespace cadb
