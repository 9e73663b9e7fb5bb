// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Finite-difference gradient oracle, kept independent of the tape machinery
// it is used to check: it only ever calls f on perturbed copies of x.

#pragma once

#include <cmath>
#include <functional>

#include "cadb/tensor.hpp"

namespace cadb {

template <class T>
struct FdDefaults;

template <>
struct FdDefaults<double> {
  static constexpr double eps = 1e-5;
};
template <>
struct FdDefaults<float> {
  static constexpr float eps = 1e-3f;
};

// Central differences (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps) per coordinate.
template <class T>
Tensor<T> finite_difference_gradients(const std::function<T(const Tensor<T>&)>& f,
                                      const Tensor<T>& x, T eps = FdDefaults<T>::eps) {
  check(eps > T(0), "finite_difference_gradients: eps must be positive");
  Tensor<T> grad(x.shape());
  Tensor<T> probe(x.shape(), std::vector<T>(x.vec()));
  T* pp = probe.data();
  T* pg = grad.data();
  for (int64_t i = 0; i < x.numel(); ++i) {
    const T saved = pp[i];
    pp[i] = saved + eps;
    const T f_plus = f(probe);
    pp[i] = saved - eps;
    const T f_minus = f(probe);
    pp[i] = saved;
    check(std::isfinite(static_cast<double>(f_plus)) &&
              std::isfinite(static_cast<double>(f_minus)),
          "finite_difference_gradients: non-finite evaluation at coordinate " +
              std::to_string(i));
    pg[i] = (f_plus - f_minus) / (T(2) * eps);
  }
  return grad;
}

// Elementwise relative error with denominator max(|a|,|b|,1e-8).
template <class T>
double max_relative_error(const std::vector<T>& a, const std::vector<T>& b) {
  check(a.size() == b.size(), "max_relative_error: length mismatch");
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double av = static_cast<double>(a[i]);
    const double bv = static_cast<double>(b[i]);
    const double denom = std::max({std::fabs(av), std::fabs(bv), 1e-8});
    worst = std::max(worst, std::fabs(av - bv) / denom);
  }
  return worst;
}

}  // namespace cadb
