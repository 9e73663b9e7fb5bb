// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Scale-invariant SNR training objective and SDR-style evaluation metrics.
// Metrics compute in double and clamp for reporting; the loss keeps only the
// epsilon guard so gradients stay alive.

#pragma once

#include <cmath>
#include <vector>

#include "cadb/ops.hpp"

namespace cadb {

struct MetricResult {
  double value = 0.0;  // decibels
  bool clamp_applied = false;
};

constexpr double kMetricEps = 1e-8;
constexpr double kMetricClampDb = 60.0;

namespace detail {

inline MetricResult clamp_db(double v) {
  MetricResult r;
  if (v > kMetricClampDb) {
    r.value = kMetricClampDb;
    r.clamp_applied = true;
  } else if (v < -kMetricClampDb) {
    r.value = -kMetricClampDb;
    r.clamp_applied = true;
  } else {
    r.value = v;
  }
  return r;
}

template <class T>
inline std::vector<double> to_double(const Tensor<T>& x) {
  std::vector<double> v(static_cast<size_t>(x.numel()));
  const T* p = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) v[static_cast<size_t>(i)] = static_cast<double>(p[i]);
  return v;
}

inline void zero_mean(std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double& x : v) x -= m;
}

}  // namespace detail

template <class T>
MetricResult si_snr(const Tensor<T>& estimate, const Tensor<T>& reference) {
  check(estimate.numel() == reference.numel(),
        "si_snr: length mismatch " + std::to_string(estimate.numel()) + " vs " +
            std::to_string(reference.numel()));
  check(estimate.numel() > 0, "si_snr: empty input");
  std::vector<double> est = detail::to_double(estimate);
  std::vector<double> ref = detail::to_double(reference);
  detail::zero_mean(est);
  detail::zero_mean(ref);
  double ref_energy = 0.0, cross = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    ref_energy += ref[i] * ref[i];
    cross += est[i] * ref[i];
  }
  check(ref_energy > 0.0, "si_snr: reference is identically zero");
  const double scale = cross / ref_energy;
  double target_energy = 0.0, err_energy = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double t = scale * ref[i];
    const double e = est[i] - t;
    target_energy += t * t;
    err_energy += e * e;
  }
  return detail::clamp_db(10.0 * std::log10(target_energy / (err_energy + kMetricEps)));
}

template <class T>
MetricResult sdr(const Tensor<T>& estimate, const Tensor<T>& reference) {
  check(estimate.numel() == reference.numel(),
        "sdr: length mismatch " + std::to_string(estimate.numel()) + " vs " +
            std::to_string(reference.numel()));
  std::vector<double> est = detail::to_double(estimate);
  std::vector<double> ref = detail::to_double(reference);
  double ref_energy = 0.0, err_energy = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    ref_energy += ref[i] * ref[i];
    const double e = est[i] - ref[i];
    err_energy += e * e;
  }
  return detail::clamp_db(10.0 * std::log10(ref_energy / (err_energy + kMetricEps)));
}

template <class T>
MetricResult sdri(const Tensor<T>& estimate, const Tensor<T>& noisy,
                  const Tensor<T>& reference) {
  const MetricResult a = sdr(estimate, reference);
  const MetricResult b = sdr(noisy, reference);
  MetricResult r = detail::clamp_db(a.value - b.value);
  r.clamp_applied = r.clamp_applied || a.clamp_applied || b.clamp_applied;
  return r;
}

template <class T>
double si_snr_improvement(const Tensor<T>& estimate, const Tensor<T>& noisy,
                          const Tensor<T>& reference) {
  return si_snr(estimate, reference).value - si_snr(noisy, reference).value;
}

// Differentiable -SI-SNR, mean over the batch. estimate/reference are [B,L]
// (or [L], treated as one item). Epsilon in both energies, no clamping.
template <class T>
Tensor<T> si_snr_loss(const Tensor<T>& estimate, const Tensor<T>& reference) {
  check(estimate.shape() == reference.shape(),
        "si_snr_loss: shape mismatch " + shape_str(estimate.shape()) + " vs " +
            shape_str(reference.shape()));
  Tensor<T> est2 = estimate, ref2 = reference;
  if (estimate.ndim() == 1) {
    est2 = reshape(estimate, {1, estimate.numel()});
    ref2 = reshape(reference, {1, reference.numel()});
  }
  check(est2.ndim() == 2, "si_snr_loss: expected [B,L] input");
  const int64_t B = est2.dim(0), L = est2.dim(1);
  const T eps = static_cast<T>(kMetricEps);
  const T db_scale = static_cast<T>(10.0 / std::log(10.0));
  std::vector<Tensor<T>> losses;
  losses.reserve(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    Tensor<T> est = reshape(slice(est2, 0, b, 1), {L});
    Tensor<T> ref = reshape(slice(ref2, 0, b, 1), {L});
    {
      double re = 0.0;
      const T* pr = ref.data();
      for (int64_t i = 0; i < L; ++i) re += static_cast<double>(pr[i]) * pr[i];
      check(re > 0.0, "si_snr_loss: reference is identically zero");
    }
    Tensor<T> est0 = bcast_add(est, neg(mean_all(est)));
    Tensor<T> ref0 = bcast_add(ref, neg(mean_all(ref)));
    Tensor<T> scale = div(dot(est0, ref0), dot(ref0, ref0));
    Tensor<T> target = bcast_mul(ref0, scale);
    Tensor<T> err = sub(est0, target);
    Tensor<T> num = add_scalar(dot(target, target), eps);
    Tensor<T> den = add_scalar(dot(err, err), eps);
    losses.push_back(mul_scalar(sub(log_op(den), log_op(num)), db_scale));
  }
  return mean_all(concat(losses, 0));
}

}  // namespace cadb
