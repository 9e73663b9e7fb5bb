// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Test-only oracles, deliberately independent of the implementation paths
// they check: naive loop convolution, direct complex DFT, and a harness that
// pits tape gradients against central finite differences.

#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "cadb/conv.hpp"
#include "cadb/gradcheck.hpp"
#include "cadb/ops.hpp"

namespace oracle {

// Six plain loops, no padding tricks shared with the real implementation.
inline cadb::Tensor<double> conv2d_naive(const cadb::Tensor<double>& x,
                                         const cadb::Tensor<double>& k,
                                         const cadb::Tensor<double>& bias,
                                         const cadb::Conv2dSpec& spec) {
  const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = k.dim(0), kH = k.dim(2), kW = k.dim(3);
  const int64_t Ho = (H + 2 * spec.pad_h - spec.dil_h * (kH - 1) - 1) / spec.stride_h + 1;
  const int64_t Wo = (W + 2 * spec.pad_w - spec.dil_w * (kW - 1) - 1) / spec.stride_w + 1;
  cadb::Tensor<double> out({B, Cout, Ho, Wo});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          double acc = bias.defined() ? bias.data()[co] : 0.0;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t ih = 0; ih < kH; ++ih)
              for (int64_t iw = 0; iw < kW; ++iw) {
                const int64_t sh = oh * spec.stride_h - spec.pad_h + ih * spec.dil_h;
                const int64_t sw = ow * spec.stride_w - spec.pad_w + iw * spec.dil_w;
                if (sh < 0 || sh >= H || sw < 0 || sw >= W) continue;
                acc += x.data()[((b * Cin + ci) * H + sh) * W + sw] *
                       k.data()[((co * Cin + ci) * kH + ih) * kW + iw];
              }
          out.data()[((b * Cout + co) * Ho + oh) * Wo + ow] = acc;
        }
  return out;
}

// Direct onesided DFT of one windowed frame via std::complex accumulation.
inline std::vector<std::complex<double>> dft_onesided(const std::vector<double>& frame) {
  const size_t n = frame.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(i) /
                         static_cast<double>(n);
      acc += frame[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Compares tape gradients of scalar = fn(x) against central differences.
// fn runs both under the tape (analytic pass) and without one (FD probes).
inline double grad_vs_fd(
    const cadb::Shape& shape,
    const std::function<cadb::Tensor<double>(const cadb::Tensor<double>&)>& fn,
    uint64_t seed, double eps = 1e-6, double lo = -1.0, double hi = 1.0) {
  cadb::Rng rng(seed);
  cadb::Tensor<double> x(shape);
  for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(lo, hi);
  x.set_requires_grad(true);
  {
    cadb::Tape<double> tape;
    cadb::Tensor<double> y = fn(x);
    cadb::backward(y);
  }
  std::vector<double> analytic = x.grad_view();
  x.set_requires_grad(false);
  cadb::Tensor<double> fd = cadb::finite_difference_gradients<double>(
      [&](const cadb::Tensor<double>& probe) { return fn(probe).item(); }, x, eps);
  return cadb::max_relative_error(analytic, fd.vec());
}

// Fixed random projection to turn any-shaped op output into a scalar.
inline cadb::Tensor<double> project_scalar(const cadb::Tensor<double>& t, uint64_t seed) {
  cadb::Rng rng(seed);
  cadb::Tensor<double> w(t.shape());
  for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
  return cadb::sum_all(cadb::mul(t, w));
}

inline cadb::Tensor<double> random_tensor(const cadb::Shape& shape, uint64_t seed,
                                          double lo = -1.0, double hi = 1.0) {
  cadb::Rng rng(seed);
  cadb::Tensor<double> t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace oracle
