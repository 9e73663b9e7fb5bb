// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cadb/signal.hpp"
#include "oracles.hpp"

using cadb::ComplexSpectrogram;
using cadb::StftConfig;
using cadb::Tensor;
using cadb::Window;

namespace {

Tensor<double> random_wave(int64_t n, uint64_t seed) {
  cadb::Rng rng(seed);
  Tensor<double> x({n});
  for (int64_t i = 0; i < n; ++i) x.data()[i] = rng.uniform(-0.9, 0.9);
  return x;
}

}  // namespace

TEST_CASE("COLA holds for the default window/hop and fails off-grid") {
  StftConfig cfg;  // hann_sqrt, 400/400/100
  CHECK(cadb::cola_check(cfg));

  StftConfig hann = cfg;
  hann.window = Window::Hann;
  CHECK(cadb::cola_check(hann));

  StftConfig bad = cfg;
  bad.hop_length = 150;  // does not divide the window into a COLA partition
  CHECK(!cadb::cola_check(bad));

  StftConfig bad2 = cfg;
  bad2.hop_length = 300;
  CHECK(!cadb::cola_check(bad2));
}

TEST_CASE("stft: zero waveform gives zero planes") {
  StftConfig cfg;
  Tensor<double> x({1600});
  ComplexSpectrogram<double> spec = cadb::stft(x, cfg);
  CHECK(spec.bins() == 201);
  for (int64_t i = 0; i < spec.real.numel(); ++i) {
    CHECK(spec.real.data()[i] == 0.0);
    CHECK(spec.imag.data()[i] == 0.0);
  }
}

TEST_CASE("stft: too-short input names the minimum") {
  StftConfig cfg;
  Tensor<double> x({399});
  try {
    cadb::stft(x, cfg);
    FAIL("expected throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("400") != std::string::npos);
  }
}

TEST_CASE("stft: frames of a length-400 signal match the direct DFT oracle") {
  StftConfig cfg;
  Tensor<double> x = random_wave(400, 5);
  ComplexSpectrogram<double> spec = cadb::stft(x, cfg);
  // with centre padding of 200, frame 2 covers exactly x[0..400)
  const auto win = cadb::make_window(cfg.win_length, cfg.window);
  std::vector<double> frame(400);
  for (int i = 0; i < 400; ++i) frame[static_cast<size_t>(i)] = x.data()[i] * win[static_cast<size_t>(i)];
  const auto want = oracle::dft_onesided(frame);
  for (int64_t k = 0; k < spec.bins(); ++k) {
    CHECK(spec.real.data()[2 * spec.bins() + k] ==
          doctest::Approx(want[static_cast<size_t>(k)].real()).epsilon(1e-9));
    CHECK(spec.imag.data()[2 * spec.bins() + k] ==
          doctest::Approx(want[static_cast<size_t>(k)].imag()).epsilon(1e-9));
  }
}

TEST_CASE("stft: constant waveform concentrates energy in bin 0") {
  StftConfig cfg;
  Tensor<double> x = Tensor<double>::full({1600}, 1.0);
  ComplexSpectrogram<double> spec = cadb::stft(x, cfg);

  // oracle: interior frames of a DC signal are the window itself
  const auto win = cadb::make_window(cfg.win_length, cfg.window);
  const auto wdft = oracle::dft_onesided(win);
  double want_total = 0.0;
  for (size_t k = 0; k < wdft.size(); ++k) {
    const double mult = (k == 0 || k + 1 == wdft.size()) ? 1.0 : 2.0;
    want_total += mult * std::norm(wdft[k]);
  }
  const double want_fraction = std::norm(wdft[0]) / want_total;
  CHECK(want_fraction > 0.8);  // 0.8106 for sqrt-Hann; the DC bin dominates

  const int64_t F = spec.bins();
  for (int64_t t = 4; t < spec.frames() - 4; ++t) {
    double total = 0.0;
    int64_t argmax = 0;
    double best = -1.0;
    for (int64_t k = 0; k < F; ++k) {
      const double mult = (k == 0 || k == F - 1) ? 1.0 : 2.0;
      const double e = spec.real.data()[t * F + k] * spec.real.data()[t * F + k] +
                       spec.imag.data()[t * F + k] * spec.imag.data()[t * F + k];
      total += mult * e;
      if (e > best) {
        best = e;
        argmax = k;
      }
    }
    CHECK(argmax == 0);
    const double frac = (spec.real.data()[t * F] * spec.real.data()[t * F]) / total;
    CHECK(frac == doctest::Approx(want_fraction).epsilon(1e-6));
  }
}

TEST_CASE("stft: 400 Hz sine at 16 kHz peaks at bin 10") {
  StftConfig cfg;
  Tensor<double> x({1600});
  for (int64_t i = 0; i < x.numel(); ++i)
    x.data()[i] = std::sin(2.0 * M_PI * 400.0 * static_cast<double>(i) / 16000.0);
  ComplexSpectrogram<double> spec = cadb::stft(x, cfg);
  Tensor<double> mag = spec.magnitude();
  const int64_t F = spec.bins();
  for (int64_t t = 2; t < spec.frames() - 2; ++t) {
    int64_t argmax = 0;
    for (int64_t k = 1; k < F; ++k)
      if (mag.data()[t * F + k] > mag.data()[t * F + argmax]) argmax = k;
    CHECK(argmax == 10);
  }
}

TEST_CASE("istft: all-zero spectrogram gives silence") {
  StftConfig cfg;
  ComplexSpectrogram<double> spec;
  spec.config = cfg;
  spec.original_length = 1600;
  spec.real = Tensor<double>({17, 201});
  spec.imag = Tensor<double>({17, 201});
  Tensor<double> y = cadb::istft(spec);
  CHECK(y.numel() == 1600);
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0);
}

TEST_CASE("istft: COLA violation is an error") {
  StftConfig cfg;
  cfg.hop_length = 150;
  ComplexSpectrogram<double> spec;
  spec.config = cfg;
  spec.original_length = 1600;
  spec.real = Tensor<double>({9, 201});
  spec.imag = Tensor<double>({9, 201});
  CHECK_THROWS(cadb::istft(spec));
}

TEST_CASE("roundtrip: istft(stft(x)) == x within 1e-6") {
  StftConfig cfg;
  for (int64_t len : {int64_t(400), int64_t(6400), int64_t(64000)}) {
    Tensor<double> x = random_wave(len, static_cast<uint64_t>(len));
    Tensor<double> y = cadb::istft(cadb::stft(x, cfg));
    REQUIRE(y.numel() == len);  // exact length preservation
    double worst = 0.0;
    for (int64_t i = 0; i < len; ++i)
      worst = std::max(worst, std::fabs(y.data()[i] - x.data()[i]));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("roundtrip holds for plain hann analysis/synthesis") {
  StftConfig cfg;
  cfg.window = Window::Hann;
  Tensor<double> x = random_wave(6400, 99);
  Tensor<double> y = cadb::istft(cadb::stft(x, cfg));
  double worst = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i)
    worst = std::max(worst, std::fabs(y.data()[i] - x.data()[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("linearity: doubling the signal doubles the magnitude planes") {
  StftConfig cfg;
  Tensor<double> x = random_wave(3200, 123);
  Tensor<double> x2 = cadb::mul_scalar(x, 2.0);
  Tensor<double> m1 = cadb::stft(x, cfg).magnitude();
  Tensor<double> m2 = cadb::stft(x2, cfg).magnitude();
  for (int64_t i = 0; i < m1.numel(); ++i)
    CHECK(m2.data()[i] == doctest::Approx(2.0 * m1.data()[i]).epsilon(1e-6));
}

TEST_CASE("power compression") {
  StftConfig cfg;
  cfg.n_fft = cfg.win_length = 16;
  cfg.hop_length = 4;

  ComplexSpectrogram<double> spec;
  spec.config = cfg;
  spec.original_length = 64;
  spec.real = Tensor<double>({2, 9});
  spec.imag = Tensor<double>({2, 9});
  spec.real.data()[0] = 1.0;    // magnitude 1 -> fixed point
  spec.real.data()[1] = 100.0;  // magnitude 100
  spec.real.data()[2] = 3.0;    // 3-4-5 triangle
  spec.imag.data()[2] = 4.0;

  SUBCASE("examples at c = 0.3") {
    ComplexSpectrogram<double> out = cadb::power_compress(spec, 0.3);
    CHECK(out.real.data()[0] == doctest::Approx(1.0));
    CHECK(out.real.data()[1] == doctest::Approx(std::pow(100.0, 0.3)));
    CHECK(out.real.data()[1] == doctest::Approx(3.98107).epsilon(1e-5));
    Tensor<double> m = out.magnitude();
    CHECK(m.data()[2] == doctest::Approx(std::pow(5.0, 0.3)));
  }
  SUBCASE("c = 1 is the identity") {
    ComplexSpectrogram<double> out = cadb::power_compress(spec, 1.0);
    for (int64_t i = 0; i < spec.real.numel(); ++i) {
      CHECK(out.real.data()[i] == doctest::Approx(spec.real.data()[i]));
      CHECK(out.imag.data()[i] == doctest::Approx(spec.imag.data()[i]));
    }
  }
  SUBCASE("decompress inverts compress at c in {0.3, 0.5, 1.0}") {
    for (double c : {0.3, 0.5, 1.0}) {
      ComplexSpectrogram<double> rt = cadb::power_decompress(cadb::power_compress(spec, c), c);
      for (int64_t i = 0; i < spec.real.numel(); ++i) {
        CHECK(rt.real.data()[i] ==
              doctest::Approx(spec.real.data()[i]).epsilon(1e-5));
        CHECK(rt.imag.data()[i] ==
              doctest::Approx(spec.imag.data()[i]).epsilon(1e-5));
      }
    }
  }
  SUBCASE("invalid exponent") {
    CHECK_THROWS(cadb::power_compress(spec, 0.0));
    CHECK_THROWS(cadb::power_compress(spec, -0.3));
  }
}

TEST_CASE("pack_input") {
  StftConfig cfg;
  cfg.n_fft = cfg.win_length = 16;
  cfg.hop_length = 4;
  ComplexSpectrogram<double> spec;
  spec.config = cfg;
  spec.original_length = 64;
  spec.real = Tensor<double>({2, 9});
  spec.imag = Tensor<double>({2, 9});

  SUBCASE("zero spectrogram packs to zeros") {
    cadb::NetworkInput<double> ni = cadb::pack_input(spec, 0.3);
    CHECK(ni.packed.shape() == cadb::Shape{1, 2, 9, 3});
    for (int64_t i = 0; i < ni.packed.numel(); ++i) CHECK(ni.packed.data()[i] == 0.0);
    for (int64_t i = 0; i < ni.phase.numel(); ++i) CHECK(ni.phase.data()[i] == 0.0);
  }
  SUBCASE("3-4-5 bin at c=1 and c=0.3") {
    spec.real.data()[4] = 3.0;
    spec.imag.data()[4] = 4.0;
    cadb::NetworkInput<double> n1 = cadb::pack_input(spec, 1.0);
    CHECK(n1.packed.data()[4 * 3 + 0] == doctest::Approx(5.0));
    CHECK(n1.packed.data()[4 * 3 + 1] == doctest::Approx(3.0));
    CHECK(n1.packed.data()[4 * 3 + 2] == doctest::Approx(4.0));

    cadb::NetworkInput<double> n2 = cadb::pack_input(spec, 0.3);
    CHECK(n2.packed.data()[4 * 3 + 0] == doctest::Approx(1.6207).epsilon(1e-4));
    CHECK(n2.packed.data()[4 * 3 + 1] == doctest::Approx(0.9724).epsilon(1e-4));
    CHECK(n2.packed.data()[4 * 3 + 2] == doctest::Approx(1.2966).epsilon(1e-4));
  }
  SUBCASE("channel-0 consistency after compression") {
    cadb::Rng rng(7);
    for (int64_t i = 0; i < spec.real.numel(); ++i) {
      spec.real.data()[i] = rng.uniform(-2.0, 2.0);
      spec.imag.data()[i] = rng.uniform(-2.0, 2.0);
    }
    cadb::NetworkInput<double> ni = cadb::pack_input(spec, 0.3);
    for (int64_t i = 0; i < spec.real.numel(); ++i) {
      const double m = ni.packed.data()[i * 3 + 0];
      const double r = ni.packed.data()[i * 3 + 1];
      const double im = ni.packed.data()[i * 3 + 2];
      CHECK(m == doctest::Approx(std::sqrt(r * r + im * im)).epsilon(1e-5));
    }
  }
}

TEST_CASE("istft gradients match finite differences") {
  StftConfig cfg;
  cfg.n_fft = cfg.win_length = 16;
  cfg.hop_length = 4;
  const int64_t frames = 6, F = 9, L = 24;
  auto im = oracle::random_tensor({1, frames, F}, 777);
  CHECK(oracle::grad_vs_fd({1, frames, F}, [&](const Tensor<double>& re) {
          return oracle::project_scalar(cadb::istft(re, im, cfg, L), 1);
        }, 778) < 1e-4);
  auto re = oracle::random_tensor({1, frames, F}, 779);
  CHECK(oracle::grad_vs_fd({1, frames, F}, [&](const Tensor<double>& im2) {
          return oracle::project_scalar(cadb::istft(re, im2, cfg, L), 2);
        }, 780) < 1e-4);
}
