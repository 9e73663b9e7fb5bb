// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// End-to-end gradient verification: analytic gradients of the SI-SNR loss
// through the whole network against central finite differences over a sampled
// parameter subset, in double precision.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cadb/audio.hpp"
#include "cadb/metrics.hpp"
#include "cadb/model.hpp"

namespace cadb {

struct GradCheckModuleReport {
  std::string module;
  double max_rel_err = 0.0;
  std::string worst_param;
  int samples = 0;
};

struct GradCheckReport {
  std::vector<GradCheckModuleReport> modules;
  double max_rel_err = 0.0;
  std::string worst_param;

  bool passed(double tol = 1e-4) const { return max_rel_err < tol; }
};

// eps is kept small so finite differences rarely straddle a PReLU kink; in
// double precision the difference quotient still has ~7 clean digits.
inline GradCheckReport model_gradient_check(const ModelConfig& cfg, uint64_t seed,
                                            int samples_per_module = 8,
                                            double eps = 1e-6) {
  cfg.validate();
  Model<double> model(cfg);
  model.init_parameters(seed);
  model.parameters().set_requires_grad(true);

  // one deterministic toy mixture, just long enough for the configured STFT
  const int64_t length = 8 * cfg.stft.n_fft;
  ToyCorpusConfig tc;
  tc.num_examples = 1;
  tc.seed = seed;
  tc.sample_rate = cfg.stft.sample_rate;
  tc.segment_seconds =
      static_cast<double>(length) / static_cast<double>(cfg.stft.sample_rate);
  MixtureSpec spec = make_toy_corpus(tc)[0];
  MixResult mixed = mix_at_snr(spec.clean, spec.noise, spec.snr_db);

  const int64_t L = static_cast<int64_t>(mixed.noisy.size());
  Tensor<double> noisy({1, L}, std::vector<double>(mixed.noisy.begin(), mixed.noisy.end()));
  Tensor<double> clean({1, L}, std::vector<double>(spec.clean.begin(), spec.clean.end()));

  auto loss_value = [&]() -> double {
    Tensor<double> enhanced = model.forward(noisy);
    return si_snr_loss(enhanced, clean).item();
  };

  // analytic gradients via one tape pass
  model.parameters().zero_grads();
  {
    Tape<double> tape;
    Tensor<double> enhanced = model.forward(noisy);
    Tensor<double> loss = si_snr_loss(enhanced, clean);
    backward(loss);
  }

  // group parameters by module (first name component)
  std::map<std::string, std::vector<size_t>> groups;
  std::vector<std::string> group_order;
  const auto& items = model.parameters().items();
  for (size_t i = 0; i < items.size(); ++i) {
    const std::string module = items[i].name.substr(0, items[i].name.find('.'));
    if (groups.find(module) == groups.end()) group_order.push_back(module);
    groups[module].push_back(i);
  }

  GradCheckReport report;
  Rng rng(mix_seed(seed, 0xFD));
  for (const auto& module : group_order) {
    GradCheckModuleReport mr;
    mr.module = module;
    const auto& tensor_ids = groups[module];
    for (int s = 0; s < samples_per_module; ++s) {
      const size_t ti =
          tensor_ids[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(tensor_ids.size())))];
      Tensor<double> t = items[ti].tensor;
      const int64_t coord = rng.uniform_int(t.numel());
      const double saved = t.data()[coord];
      t.data()[coord] = saved + eps;
      const double f_plus = loss_value();
      t.data()[coord] = saved - eps;
      const double f_minus = loss_value();
      t.data()[coord] = saved;
      check(std::isfinite(f_plus) && std::isfinite(f_minus),
            "gradient check: non-finite loss while probing '" + items[ti].name + "'");
      const double fd = (f_plus - f_minus) / (2.0 * eps);
      const double analytic =
          t.has_grad() ? t.grad_view()[static_cast<size_t>(coord)] : 0.0;
      const double denom = std::max({std::fabs(fd), std::fabs(analytic), 1e-8});
      const double rel = std::fabs(fd - analytic) / denom;
      ++mr.samples;
      if (rel > mr.max_rel_err) {
        mr.max_rel_err = rel;
        mr.worst_param = items[ti].name + "[" + std::to_string(coord) + "]";
      }
    }
    if (mr.max_rel_err > report.max_rel_err) {
      report.max_rel_err = mr.max_rel_err;
      report.worst_param = mr.worst_param;
    }
    report.modules.push_back(std::move(mr));
  }
  return report;
}

// Desk-scale configuration for gradient checking (kept under the CLI's
// parameter cap).
inline ModelConfig gradcheck_model_config() {
  ModelConfig cfg;
  cfg.channels = 4;
  cfg.num_blocks = 1;
  cfg.attention_heads = 2;
  cfg.conformer_kernel = 7;
  cfg.ffn_expansion = 2;
  cfg.stft.n_fft = 64;
  cfg.stft.win_length = 64;
  cfg.stft.hop_length = 16;
  return cfg;
}

}  // namespace cadb
