// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Command-line front end: enhance / train / gradcheck / info.
// Exit codes: 0 success, 2 usage or I/O error, 3 checkpoint/config mismatch,
// 4 training NaN abort, 5 gradient-check failure.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cadb/checkpoint.hpp"
#include "cadb/config_file.hpp"
#include "cadb/config_kv.hpp"
#include "cadb/metrics.hpp"
#include "cadb/model_gradcheck.hpp"
#include "cadb/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitCheckpointMismatch = 3;
constexpr int kExitTrainNan = 4;
constexpr int kExitGradcheckFailed = 5;

int log_level() {
  const char* env = std::getenv("CADB_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[cadb] " << msg << "\n";
}

std::string human_millions(int64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2fM", static_cast<double>(n) / 1e6);
  return buf;
}

// Runs the model over bounded chunks so arbitrarily long inputs stay within a
// bounded memory footprint. The chunk length is capped both in seconds and in
// STFT frames (time attention is quadratic in the frame count).
std::vector<double> enhance_waveform(cadb::Model<float>& model,
                                     const std::vector<double>& input) {
  const auto& stft_cfg = model.config().stft;
  const int64_t chunk =
      std::min<int64_t>(4 * stft_cfg.sample_rate, 768 * stft_cfg.hop_length);
  const int64_t min_len = stft_cfg.win_length;
  std::vector<double> output;
  output.reserve(input.size());
  int64_t pos = 0;
  const int64_t total = static_cast<int64_t>(input.size());
  do {
    const int64_t len = std::min(chunk, total - pos);
    const int64_t padded = std::max(len, min_len);
    cadb::Tensor<float> noisy({1, padded});
    for (int64_t i = 0; i < len; ++i)
      noisy.data()[i] = static_cast<float>(input[static_cast<size_t>(pos + i)]);
    cadb::Tensor<float> enhanced = model.forward(noisy);
    for (int64_t i = 0; i < len; ++i)
      output.push_back(static_cast<double>(enhanced.data()[i]));
    pos += len;
  } while (pos < total);
  return output;
}

int cmd_enhance(const std::string& input_path, const std::string& output_path,
                const std::string& checkpoint_path, const std::string& config_path,
                const std::string& reference_path) {
  cadb::Model<float> model = [&]() {
    try {
      return cadb::load_checkpoint_model(checkpoint_path);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      std::exit(kExitCheckpointMismatch);
    }
  }();
  if (!config_path.empty()) {
    const cadb::CliConfig cli = cadb::parse_config_file(config_path);
    const auto a = cadb::model_config_kv(cli.model);
    const auto b = cadb::model_config_kv(model.config());
    if (a != b) {
      std::cerr << "error: config '" << config_path
                << "' does not match the checkpoint's embedded config\n";
      return kExitCheckpointMismatch;
    }
  }

  cadb::WavData wav = cadb::load_wav(input_path);
  if (wav.sample_rate != model.config().stft.sample_rate) {
    std::cerr << "error: input '" << input_path << "' has sample rate "
              << wav.sample_rate << " but the model expects "
              << model.config().stft.sample_rate << "\n";
    return kExitUsage;
  }
  log_info("enhancing " + std::to_string(wav.samples.size()) + " samples");
  std::vector<double> enhanced = enhance_waveform(model, wav.samples);
  // SI-SNR training leaves the output scale free; match the input's RMS so
  // the written PCM16 does not clip
  double in_sq = 0.0, out_sq = 0.0;
  for (double v : wav.samples) in_sq += v * v;
  for (double v : enhanced) out_sq += v * v;
  if (in_sq > 0.0 && out_sq > 0.0) {
    const double gain = std::sqrt(in_sq / out_sq);
    for (double& v : enhanced) v *= gain;
  }
  cadb::save_wav(output_path, enhanced, wav.sample_rate);
  log_info("wrote " + output_path);

  if (!reference_path.empty()) {
    cadb::WavData ref = cadb::load_wav(reference_path);
    if (ref.samples.size() != wav.samples.size()) {
      std::cerr << "error: reference '" << reference_path << "' length "
                << ref.samples.size() << " does not match input length "
                << wav.samples.size() << "\n";
      return kExitUsage;
    }
    const int64_t L = static_cast<int64_t>(enhanced.size());
    cadb::Tensor<double> est({L}, std::vector<double>(enhanced));
    cadb::Tensor<double> noisy({L}, std::vector<double>(wav.samples));
    cadb::Tensor<double> clean({L}, std::vector<double>(ref.samples));
    std::printf("si_snr = %.9g\n", cadb::si_snr(est, clean).value);
    std::printf("si_snri = %.9g\n", cadb::si_snr_improvement(est, noisy, clean));
    std::printf("sdri = %.9g\n", cadb::sdri(est, noisy, clean).value);
  }
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, bool toy_mode,
              const std::string& manifest_path) {
  const cadb::CliConfig cli = cadb::parse_config_file(config_path);

  std::vector<cadb::MixtureSpec> train_set, val_set;
  if (toy_mode) {
    cadb::ToyCorpusConfig tc = cli.toy;
    tc.num_examples = cli.toy_train_examples;
    tc.seed = cli.train.seed;
    train_set = cadb::make_toy_corpus(tc);
    tc.num_examples = cli.toy_val_examples;
    tc.seed = cli.train.seed + 1;
    val_set = cadb::make_toy_corpus(tc);
  } else {
    const auto entries = cadb::load_manifest(manifest_path);
    cadb::check(!entries.empty(), "train: manifest '" + manifest_path + "' is empty");
    const size_t seg_len = static_cast<size_t>(cli.toy.segment_seconds *
                                               cli.model.stft.sample_rate);
    for (size_t i = 0; i < entries.size(); ++i) {
      cadb::WavData clean = cadb::load_wav(entries[i].clean_path);
      cadb::WavData noise = cadb::load_wav(entries[i].noise_path);
      cadb::MixtureSpec spec;
      spec.sample_rate = clean.sample_rate;
      spec.segment_seconds = cli.toy.segment_seconds;
      spec.snr_db = entries[i].snr_db;
      spec.clean = cadb::loop_to_length(clean.samples, seg_len,
                                        cadb::mix_seed(cli.train.seed, 2 * i));
      spec.noise = cadb::loop_to_length(noise.samples, seg_len,
                                        cadb::mix_seed(cli.train.seed, 2 * i + 1));
      // every fifth example goes to validation
      if (i % 5 == 4) val_set.push_back(std::move(spec));
      else train_set.push_back(std::move(spec));
    }
    if (val_set.empty()) {
      val_set.push_back(train_set.back());
      train_set.pop_back();
    }
    cadb::check(!train_set.empty(), "train: manifest has no training examples");
  }

  log_info("training on " + std::to_string(train_set.size()) + " examples, validating on " +
           std::to_string(val_set.size()));
  const cadb::TrainResult result =
      cadb::train(cli.model, cli.train, train_set, val_set, out_dir);
  if (result.aborted_nan) {
    std::cerr << "error: training aborted on non-finite loss; last checkpoint kept at "
              << result.last_checkpoint << "\n";
    return kExitTrainNan;
  }
  std::printf("best_val_sisnri = %.9g\n", result.best_val_sisnri);
  std::printf("best_checkpoint = %s\n", result.best_checkpoint.c_str());
  std::printf("metrics = %s\n", result.metrics_path.c_str());
  return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, const std::string& ablation) {
  cadb::ModelConfig cfg = cadb::gradcheck_model_config();
  uint64_t seed = 7;
  if (!config_path.empty()) {
    const cadb::CliConfig cli = cadb::parse_config_file(config_path);
    cfg = cli.model;
    seed = cli.train.seed;
  }
  cfg = cadb::apply_ablation(cfg, ablation.empty() ? "full" : ablation);

  const cadb::ParameterCount pc = cadb::count_parameters(cfg);
  if (pc.total > 50000) {
    std::cerr << "error: gradcheck requires a toy-scale config (<= 50000 parameters), "
              << "got " << pc.total << "\n";
    return kExitUsage;
  }

  const cadb::GradCheckReport report = cadb::model_gradient_check(cfg, seed);
  for (const auto& m : report.modules)
    std::printf("module %s max_rel_err %.3e (%d samples)\n", m.module.c_str(),
                m.max_rel_err, m.samples);
  std::printf("max_rel_err = %.3e\n", report.max_rel_err);
  if (!report.passed()) {
    std::cerr << "error: gradient check failed; worst parameter " << report.worst_param
              << " at rel err " << report.max_rel_err << "\n";
    return kExitGradcheckFailed;
  }
  return kExitOk;
}

int cmd_info(const std::string& config_path) {
  const cadb::CliConfig cli = cadb::parse_config_file(config_path);
  const cadb::ParameterCount pc = cadb::count_parameters(cli.model);
  std::printf("f_bins = %lld\n", static_cast<long long>(cli.model.f_bins()));
  std::printf("f_half = %lld\n", static_cast<long long>(cli.model.f_half()));
  for (const auto& [module, count] : pc.per_module)
    std::printf("params.%s = %lld\n", module.c_str(), static_cast<long long>(count));
  std::printf("params.total = %lld\n", static_cast<long long>(pc.total));
  std::printf("params.total_human = %s\n", human_millions(pc.total).c_str());
  for (const auto& name : cadb::ablation_names()) {
    const cadb::ParameterCount apc =
        cadb::count_parameters(cadb::apply_ablation(cli.model, name));
    std::printf("params.ablation.%s = %lld\n", name.c_str(),
                static_cast<long long>(apc.total));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"channel-aware dual-branch conformer speech enhancement"};
  app.require_subcommand(1);

  std::string input, output, checkpoint, config, reference, out_dir, manifest, ablation;
  bool toy_mode = false;

  CLI::App* enhance = app.add_subcommand("enhance", "enhance a WAV file");
  enhance->add_option("--input", input, "noisy input WAV")->required();
  enhance->add_option("--output", output, "enhanced output WAV")->required();
  enhance->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  enhance->add_option("--config", config, "optional config to validate against");
  enhance->add_option("--reference", reference, "clean reference WAV for metrics");

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config, "config file")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_flag("--toy", toy_mode, "train on the synthetic toy corpus");
  train->add_option("--manifest", manifest, "corpus manifest (clean noise snr per line)");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_option("--config", config, "config file (defaults to a built-in toy config)");
  gradcheck->add_option("--ablation", ablation,
                        "variant: full, no_cfb, no_t_conformer, no_f_conformer, no_bfb");

  CLI::App* info = app.add_subcommand("info", "print parameter counts and shapes");
  info->add_option("--config", config, "config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(enhance))
      return cmd_enhance(input, output, checkpoint, config, reference);
    if (app.got_subcommand(train)) {
      const bool manifest_given = !manifest.empty();
      if (toy_mode == manifest_given) {
        // exactly one of --toy / --manifest must be chosen
        std::cerr << "usage: train requires exactly one of --toy or --manifest <path>\n";
        return kExitUsage;
      }
      return cmd_train(config, out_dir, toy_mode, manifest);
    }
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(config, ablation);
    if (app.got_subcommand(info)) return cmd_info(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
