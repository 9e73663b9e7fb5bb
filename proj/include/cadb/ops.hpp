// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Differentiable primitives. Every op validates shapes up front (errors name
// the op and both shapes), computes eagerly, and records its backward rule on
// the active tape when any input is tracked. Broadcasting is deliberately
// limited to scalar-tensor and trailing-axis bias addition.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cadb/tensor.hpp"

namespace cadb {

namespace detail {

template <class T>
inline void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// outer/axis/inner decomposition for axis-wise ops
inline void axis_split(const Shape& s, int axis, int64_t* outer, int64_t* n, int64_t* inner) {
  check(axis >= 0 && axis < static_cast<int>(s.size()),
        "axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  int64_t o = 1, in = 1;
  for (int i = 0; i < axis; ++i) o *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) in *= s[i];
  *outer = o;
  *n = s[static_cast<size_t>(axis)];
  *inner = in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
  if (detail::tracked<T>({&a, &b})) {
    Tensor<T> A = a, B = b, O = out;
    detail::record_op(out, [A, B, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      if (A.requires_grad()) A.accumulate_grad(go);
      if (B.requires_grad()) B.accumulate_grad(go);
    });
  }
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
  if (detail::tracked<T>({&a, &b})) {
    Tensor<T> A = a, B = b, O = out;
    detail::record_op(out, [A, B, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      if (A.requires_grad()) A.accumulate_grad(go);
      if (B.requires_grad()) {
        auto& gb = B.grad_buffer();
        for (size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
  if (detail::tracked<T>({&a, &b})) {
    Tensor<T> A = a, B = b, O = out;
    detail::record_op(out, [A, B, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      if (A.requires_grad()) {
        auto& ga = A.grad_buffer();
        const T* pb2 = B.data();
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * pb2[i];
      }
      if (B.requires_grad()) {
        auto& gb = B.grad_buffer();
        const T* pa2 = A.data();
        for (size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * pa2[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("div", a, b);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] / pb[i];
  if (detail::tracked<T>({&a, &b})) {
    Tensor<T> A = a, B = b, O = out;
    detail::record_op(out, [A, B, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      const T* pb2 = B.data();
      if (A.requires_grad()) {
        auto& ga = A.grad_buffer();
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] / pb2[i];
      }
      if (B.requires_grad()) {
        auto& gb = B.grad_buffer();
        const T* po2 = O.data();
        for (size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i] * po2[i] / pb2[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + c;
  if (detail::tracked<T>({&a})) {
    Tensor<T> A = a, O = out;
    detail::record_op(out, [A, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      A.accumulate_grad(go);
    });
  }
  return out;
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * c;
  if (detail::tracked<T>({&a})) {
    Tensor<T> A = a, O = out;
    detail::record_op(out, [A, O, c]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      auto& ga = A.grad_buffer();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * c;
    });
  }
  return out;
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul_scalar(a, T(-1));
}

// x + s where s is a 1-element tensor (scalar-tensor broadcast)
template <class T>
Tensor<T> bcast_add(const Tensor<T>& x, const Tensor<T>& s) {
  check(s.numel() == 1, "bcast_add: second operand must be a scalar tensor, got " +
                            shape_str(s.shape()));
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T sv = s.data()[0];
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = px[i] + sv;
  if (detail::tracked<T>({&x, &s})) {
    Tensor<T> X = x, S = s, O = out;
    detail::record_op(out, [X, S, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      if (X.requires_grad()) X.accumulate_grad(go);
      if (S.requires_grad()) {
        T acc = T(0);
        for (T g : go) acc += g;
        S.grad_buffer()[0] += acc;
      }
    });
  }
  return out;
}

// x * s where s is a 1-element tensor
template <class T>
Tensor<T> bcast_mul(const Tensor<T>& x, const Tensor<T>& s) {
  check(s.numel() == 1, "bcast_mul: second operand must be a scalar tensor, got " +
                            shape_str(s.shape()));
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T sv = s.data()[0];
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = px[i] * sv;
  if (detail::tracked<T>({&x, &s})) {
    Tensor<T> X = x, S = s, O = out;
    detail::record_op(out, [X, S, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      if (X.requires_grad()) {
        auto& gx = X.grad_buffer();
        const T sv2 = S.data()[0];
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * sv2;
      }
      if (S.requires_grad()) {
        const T* px2 = X.data();
        T acc = T(0);
        for (size_t i = 0; i < go.size(); ++i) acc += go[i] * px2[i];
        S.grad_buffer()[0] += acc;
      }
    });
  }
  return out;
}

// std::log semantics: non-positive or non-finite inputs propagate NaN/-inf so
// downstream finiteness guards can see them.
template <class T>
Tensor<T> log_op(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = std::log(px[i]);
  if (detail::tracked<T>({&x})) {
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      auto& gx = X.grad_buffer();
      const T* px2 = X.data();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] / px2[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc = T(0);
  const T* px = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) acc += px[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::tracked<T>({&x})) {
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      auto& gx = X.grad_buffer();
      for (auto& g : gx) g += go[0];
    });
  }
  return out;
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& x) {
  check(x.numel() > 0, "mean: empty tensor");
  T acc = T(0);
  const T* px = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) acc += px[i];
  const T inv = T(1) / static_cast<T>(x.numel());
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (detail::tracked<T>({&x})) {
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O, inv]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      auto& gx = X.grad_buffer();
      for (auto& g : gx) g += go[0] * inv;
    });
  }
  return out;
}

template <class T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  return sum_all(mul(a, b));
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

namespace detail {

// C[M,N] (+)= A[M,K] * B[K,N]
template <class T>
inline void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
                    bool accumulate) {
  if (!accumulate)
    for (int64_t i = 0; i < M * N; ++i) C[i] = T(0);
  for (int64_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] (+)= A[M,K] * B^T where B is [N,K]
template <class T>
inline void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
                    bool accumulate) {
  for (int64_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T acc = T(0);
      for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
      if (accumulate)
        c[j] += acc;
      else
        c[j] = acc;
    }
  }
}

// C[M,N] (+)= A^T * B where A is [K,M], B is [K,N]
template <class T>
inline void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
                    bool accumulate) {
  if (!accumulate)
    for (int64_t i = 0; i < M * N; ++i) C[i] = T(0);
  for (int64_t k = 0; k < K; ++k) {
    const T* a = A + k * M;
    const T* b = B + k * N;
    for (int64_t i = 0; i < M; ++i) {
      const T av = a[i];
      T* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
        "matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
            shape_str(b.shape()));
  const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor<T> out({M, N});
  detail::gemm_nn(M, N, K, a.data(), b.data(), out.data(), false);
  if (detail::tracked<T>({&a, &b})) {
    Tensor<T> A = a, B = b, O = out;
    detail::record_op(out, [A, B, O, M, N, K]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      if (A.requires_grad())
        detail::gemm_nt(M, K, N, go.data(), B.data(), A.grad_buffer().data(), true);
      if (B.requires_grad())
        detail::gemm_tn(K, N, M, A.data(), go.data(), B.grad_buffer().data(), true);
    });
  }
  return out;
}

template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
        "bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
            shape_str(b.shape()));
  const int64_t Bn = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  Tensor<T> out({Bn, M, N});
  for (int64_t i = 0; i < Bn; ++i)
    detail::gemm_nn(M, N, K, a.data() + i * M * K, b.data() + i * K * N,
                    out.data() + i * M * N, false);
  if (detail::tracked<T>({&a, &b})) {
    Tensor<T> A = a, B = b, O = out;
    detail::record_op(out, [A, B, O, Bn, M, N, K]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      for (int64_t i = 0; i < Bn; ++i) {
        const T* g = go.data() + i * M * N;
        if (A.requires_grad())
          detail::gemm_nt(M, K, N, g, B.data() + i * K * N,
                          A.grad_buffer().data() + i * M * K, true);
        if (B.requires_grad())
          detail::gemm_tn(K, N, M, A.data() + i * M * K, g,
                          B.grad_buffer().data() + i * K * N, true);
      }
    });
  }
  return out;
}

// Affine map over the trailing axis: x[..., Cin] * w[Cout, Cin]^T + b[Cout].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(x.ndim() >= 1 && w.ndim() == 2, "linear: bad ranks");
  const int64_t Cin = x.dim(x.ndim() - 1);
  check(w.dim(1) == Cin, "linear: input width " + std::to_string(Cin) +
                             " does not match weight " + shape_str(w.shape()));
  const int64_t Cout = w.dim(0);
  if (b.defined())
    check(b.numel() == Cout, "linear: bias " + shape_str(b.shape()) +
                                 " does not match weight " + shape_str(w.shape()));
  const int64_t R = x.numel() / Cin;
  Shape out_shape = x.shape();
  out_shape.back() = Cout;
  Tensor<T> out(out_shape);
  detail::gemm_nt(R, Cout, Cin, x.data(), w.data(), out.data(), false);
  if (b.defined()) {
    T* po = out.data();
    const T* pb = b.data();
    for (int64_t r = 0; r < R; ++r)
      for (int64_t j = 0; j < Cout; ++j) po[r * Cout + j] += pb[j];
  }
  if (detail::tracked<T>({&x, &w, &b})) {
    Tensor<T> X = x, W = w, Bx = b, O = out;
    detail::record_op(out, [X, W, Bx, O, R, Cin, Cout]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      if (X.requires_grad())
        detail::gemm_nn(R, Cin, Cout, go.data(), W.data(), X.grad_buffer().data(), true);
      if (W.requires_grad())
        detail::gemm_tn(Cout, Cin, R, go.data(), X.data(), W.grad_buffer().data(), true);
      if (Bx.defined() && Bx.requires_grad()) {
        auto& gb = Bx.grad_buffer();
        for (int64_t r = 0; r < R; ++r)
          for (int64_t j = 0; j < Cout; ++j) gb[static_cast<size_t>(j)] += go[r * Cout + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// nonlinearities
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  int64_t outer, n, inner;
  detail::axis_split(x.shape(), axis, &outer, &n, &inner);
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * n * inner + in;
      T mx = px[base];
      for (int64_t i = 1; i < n; ++i) mx = std::max(mx, px[base + i * inner]);
      T denom = T(0);
      for (int64_t i = 0; i < n; ++i) {
        const T e = std::exp(px[base + i * inner] - mx);
        po[base + i * inner] = e;
        denom += e;
      }
      const T inv = T(1) / denom;
      for (int64_t i = 0; i < n; ++i) po[base + i * inner] *= inv;
    }
  }
  if (detail::tracked<T>({&x})) {
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O, outer, n, inner]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      auto& gx = X.grad_buffer();
      const T* py = O.data();
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t base = o * n * inner + in;
          T accum = T(0);
          for (int64_t i = 0; i < n; ++i) accum += go[base + i * inner] * py[base + i * inner];
          for (int64_t i = 0; i < n; ++i) {
            const int64_t k = base + i * inner;
            gx[static_cast<size_t>(k)] += py[k] * (go[k] - accum);
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = T(1) / (T(1) + std::exp(-px[i]));
  if (detail::tracked<T>({&x})) {
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      auto& gx = X.grad_buffer();
      const T* py = O.data();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * py[i] * (T(1) - py[i]);
    });
  }
  return out;
}

template <class T>
Tensor<T> swish(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    const T s = T(1) / (T(1) + std::exp(-px[i]));
    po[i] = px[i] * s;
  }
  if (detail::tracked<T>({&x})) {
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      auto& gx = X.grad_buffer();
      const T* px2 = X.data();
      for (size_t i = 0; i < gx.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-px2[i]));
        gx[i] += go[i] * (s + px2[i] * s * (T(1) - s));
      }
    });
  }
  return out;
}

// slope has one entry per channel (or a single shared entry)
template <class T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope, int channel_axis) {
  int64_t outer, n, inner;
  detail::axis_split(x.shape(), channel_axis, &outer, &n, &inner);
  check(slope.numel() == n || slope.numel() == 1,
        "prelu: slope " + shape_str(slope.shape()) + " does not match channel count " +
            std::to_string(n));
  const bool shared = slope.numel() == 1;
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T* pa = slope.data();
  T* po = out.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t c = 0; c < n; ++c) {
      const T a = pa[shared ? 0 : c];
      const int64_t base = (o * n + c) * inner;
      for (int64_t i = 0; i < inner; ++i) {
        const T v = px[base + i];
        po[base + i] = v >= T(0) ? v : a * v;
      }
    }
  if (detail::tracked<T>({&x, &slope})) {
    Tensor<T> X = x, A = slope, O = out;
    detail::record_op(out, [X, A, O, outer, n, inner, shared]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      const T* px2 = X.data();
      const T* pa2 = A.data();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t c = 0; c < n; ++c) {
          const T a = pa2[shared ? 0 : c];
          const int64_t base = (o * n + c) * inner;
          if (X.requires_grad()) {
            auto& gx = X.grad_buffer();
            for (int64_t i = 0; i < inner; ++i) {
              const int64_t k = base + i;
              gx[static_cast<size_t>(k)] += go[k] * (px2[k] >= T(0) ? T(1) : a);
            }
          }
          if (A.requires_grad()) {
            auto& ga = A.grad_buffer();
            T acc = T(0);
            for (int64_t i = 0; i < inner; ++i) {
              const int64_t k = base + i;
              if (px2[k] < T(0)) acc += go[k] * px2[k];
            }
            ga[shared ? 0 : static_cast<size_t>(c)] += acc;
          }
        }
    });
  }
  return out;
}

// Gated linear unit over the last axis: [..., 2H] -> [..., H], a * sigmoid(b).
template <class T>
Tensor<T> glu(const Tensor<T>& x) {
  check(x.ndim() >= 1 && x.dim(x.ndim() - 1) % 2 == 0,
        "glu: last axis of " + shape_str(x.shape()) + " must be even");
  const int64_t H = x.dim(x.ndim() - 1) / 2;
  const int64_t R = x.numel() / (2 * H);
  Shape out_shape = x.shape();
  out_shape.back() = H;
  Tensor<T> out(out_shape);
  const T* px = x.data();
  T* po = out.data();
  for (int64_t r = 0; r < R; ++r) {
    const T* row = px + r * 2 * H;
    T* orow = po + r * H;
    for (int64_t i = 0; i < H; ++i) {
      const T s = T(1) / (T(1) + std::exp(-row[H + i]));
      orow[i] = row[i] * s;
    }
  }
  if (detail::tracked<T>({&x})) {
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O, R, H]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      auto& gx = X.grad_buffer();
      const T* px2 = X.data();
      for (int64_t r = 0; r < R; ++r) {
        const T* row = px2 + r * 2 * H;
        T* grow = gx.data() + r * 2 * H;
        const T* g = go.data() + r * H;
        for (int64_t i = 0; i < H; ++i) {
          const T s = T(1) / (T(1) + std::exp(-row[H + i]));
          grow[i] += g[i] * s;
          grow[H + i] += g[i] * row[i] * s * (T(1) - s);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

namespace detail {

// Shared forward/backward for normalization over contiguous rows of length n,
// with per-position affine indices supplied by the caller.
template <class T>
inline void norm_row_forward(const T* x, int64_t n, T eps, T* xhat, T* mean_out,
                             T* inv_std_out) {
  T mean = T(0);
  for (int64_t i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<T>(n);
  T var = T(0);
  for (int64_t i = 0; i < n; ++i) {
    const T d = x[i] - mean;
    var += d * d;
  }
  var /= static_cast<T>(n);
  const T inv_std = T(1) / std::sqrt(var + eps);
  for (int64_t i = 0; i < n; ++i) xhat[i] = (x[i] - mean) * inv_std;
  *mean_out = mean;
  *inv_std_out = inv_std;
}

}  // namespace detail

// Layer norm over the trailing axis with affine gain/bias of that length.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
  check(x.ndim() >= 1, "layer_norm: rank-0 input");
  const int64_t n = x.dim(x.ndim() - 1);
  check(gain.numel() == n && bias.numel() == n,
        "layer_norm: affine shape " + shape_str(gain.shape()) +
            " does not match trailing axis " + std::to_string(n));
  const int64_t R = x.numel() / n;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(static_cast<size_t>(x.numel()));
  std::vector<T> inv_std(static_cast<size_t>(R));
  const T* px = x.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  T* po = out.data();
  for (int64_t r = 0; r < R; ++r) {
    T mean;
    detail::norm_row_forward(px + r * n, n, eps, xhat.data() + r * n, &mean,
                             &inv_std[static_cast<size_t>(r)]);
    for (int64_t i = 0; i < n; ++i)
      po[r * n + i] = pg[i] * xhat[static_cast<size_t>(r * n + i)] + pb[i];
  }
  if (detail::tracked<T>({&x, &gain, &bias})) {
    Tensor<T> X = x, G = gain, Bi = bias, O = out;
    auto xhat_s = std::make_shared<std::vector<T>>(std::move(xhat));
    auto istd_s = std::make_shared<std::vector<T>>(std::move(inv_std));
    detail::record_op(out, [X, G, Bi, O, xhat_s, istd_s, R, n]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      const T* pg2 = G.data();
      const std::vector<T>& xh = *xhat_s;
      for (int64_t r = 0; r < R; ++r) {
        const T* g = go.data() + r * n;
        const T* h = xh.data() + r * n;
        if (X.requires_grad()) {
          auto& gx = X.grad_buffer();
          T sum_dy = T(0), sum_dyh = T(0);
          for (int64_t i = 0; i < n; ++i) {
            const T dy = g[i] * pg2[i];
            sum_dy += dy;
            sum_dyh += dy * h[i];
          }
          const T istd = (*istd_s)[static_cast<size_t>(r)];
          const T invn = T(1) / static_cast<T>(n);
          for (int64_t i = 0; i < n; ++i) {
            const T dy = g[i] * pg2[i];
            gx[static_cast<size_t>(r * n + i)] +=
                istd * (dy - sum_dy * invn - h[i] * sum_dyh * invn);
          }
        }
        if (G.requires_grad()) {
          auto& gg = G.grad_buffer();
          for (int64_t i = 0; i < n; ++i) gg[static_cast<size_t>(i)] += g[i] * h[i];
        }
        if (Bi.requires_grad()) {
          auto& gb = Bi.grad_buffer();
          for (int64_t i = 0; i < n; ++i) gb[static_cast<size_t>(i)] += g[i];
        }
      }
    });
  }
  return out;
}

// Instance norm on [B,C,H,W]: normalize each (b,c) plane over H*W, affine per
// channel.
template <class T>
Tensor<T> instance_norm2d(const Tensor<T>& x, const Tensor<T>& gain,
                          const Tensor<T>& bias, T eps = T(1e-5)) {
  check(x.ndim() == 4, "instance_norm2d: expected [B,C,H,W], got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  check(gain.numel() == C && bias.numel() == C,
        "instance_norm2d: affine shape " + shape_str(gain.shape()) +
            " does not match channels " + std::to_string(C));
  Tensor<T> out(x.shape());
  std::vector<T> xhat(static_cast<size_t>(x.numel()));
  std::vector<T> inv_std(static_cast<size_t>(B * C));
  const T* px = x.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  T* po = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const int64_t base = (b * C + c) * HW;
      T mean;
      detail::norm_row_forward(px + base, HW, eps, xhat.data() + base, &mean,
                               &inv_std[static_cast<size_t>(b * C + c)]);
      for (int64_t i = 0; i < HW; ++i)
        po[base + i] = pg[c] * xhat[static_cast<size_t>(base + i)] + pb[c];
    }
  if (detail::tracked<T>({&x, &gain, &bias})) {
    Tensor<T> X = x, G = gain, Bi = bias, O = out;
    auto xhat_s = std::make_shared<std::vector<T>>(std::move(xhat));
    auto istd_s = std::make_shared<std::vector<T>>(std::move(inv_std));
    detail::record_op(out, [X, G, Bi, O, xhat_s, istd_s, B, C, HW]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      const T* pg2 = G.data();
      const std::vector<T>& xh = *xhat_s;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
          const int64_t base = (b * C + c) * HW;
          const T* g = go.data() + base;
          const T* h = xh.data() + base;
          if (X.requires_grad()) {
            auto& gx = X.grad_buffer();
            T sum_dy = T(0), sum_dyh = T(0);
            for (int64_t i = 0; i < HW; ++i) {
              const T dy = g[i] * pg2[c];
              sum_dy += dy;
              sum_dyh += dy * h[i];
            }
            const T istd = (*istd_s)[static_cast<size_t>(b * C + c)];
            const T invn = T(1) / static_cast<T>(HW);
            for (int64_t i = 0; i < HW; ++i) {
              const T dy = g[i] * pg2[c];
              gx[static_cast<size_t>(base + i)] +=
                  istd * (dy - sum_dy * invn - h[i] * sum_dyh * invn);
            }
          }
          if (G.requires_grad()) {
            auto& gg = G.grad_buffer();
            T acc = T(0);
            for (int64_t i = 0; i < HW; ++i) acc += g[i] * h[i];
            gg[static_cast<size_t>(c)] += acc;
          }
          if (Bi.requires_grad()) {
            auto& gb = Bi.grad_buffer();
            T acc = T(0);
            for (int64_t i = 0; i < HW; ++i) acc += g[i];
            gb[static_cast<size_t>(c)] += acc;
          }
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape manipulation
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  check(shape_numel(new_shape) == x.numel(),
        "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  Tensor<T> out(std::move(new_shape), std::vector<T>(x.vec()));
  if (detail::tracked<T>({&x})) {
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      X.accumulate_grad(go);
    });
  }
  return out;
}

namespace detail {

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

// out[idx] = in[perm(idx)] gather table: for each output linear index, the
// source linear index.
template <class T>
inline void permute_copy(const Tensor<T>& x, const std::vector<int>& perm, T* out) {
  const Shape& xs = x.shape();
  const int nd = x.ndim();
  Shape os(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i) os[static_cast<size_t>(i)] = xs[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  const auto xstr = row_major_strides(xs);
  const auto ostr = row_major_strides(os);
  const T* px = x.data();
  const int64_t n = x.numel();
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  for (int64_t o = 0; o < n; ++o) {
    int64_t src = 0;
    for (int i = 0; i < nd; ++i)
      src += idx[static_cast<size_t>(i)] * xstr[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    out[o] = px[src];
    for (int i = nd - 1; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < os[static_cast<size_t>(i)]) break;
      idx[static_cast<size_t>(i)] = 0;
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> permute(const Tensor<T>& x, std::vector<int> perm) {
  check(static_cast<int>(perm.size()) == x.ndim(),
        "permute: axes " + std::to_string(perm.size()) + " vs rank " +
            std::to_string(x.ndim()));
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    check(p >= 0 && p < x.ndim() && !seen[static_cast<size_t>(p)], "permute: invalid axes");
    seen[static_cast<size_t>(p)] = true;
  }
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i)
    out_shape[i] = x.dim(perm[i]);
  Tensor<T> out(out_shape);
  detail::permute_copy(x, perm, out.data());
  if (detail::tracked<T>({&x})) {
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O, inv]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      Tensor<T> gwrap(O.shape(), std::vector<T>(go));
      std::vector<T> gsrc(static_cast<size_t>(X.numel()));
      detail::permute_copy(gwrap, inv, gsrc.data());
      X.accumulate_grad(gsrc);
    });
  }
  return out;
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  int64_t outer, n, inner;
  detail::axis_split(x.shape(), axis, &outer, &n, &inner);
  check(start >= 0 && len > 0 && start + len <= n,
        "slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
            ") out of bounds for axis length " + std::to_string(n));
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  Tensor<T> out(out_shape);
  const T* px = x.data();
  T* po = out.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy(px + (o * n + start) * inner, px + (o * n + start + len) * inner,
              po + o * len * inner);
  if (detail::tracked<T>({&x})) {
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O, outer, n, inner, start, len]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      auto& gx = X.grad_buffer();
      for (int64_t o = 0; o < outer; ++o) {
        const T* g = go.data() + o * len * inner;
        T* dst = gx.data() + (o * n + start) * inner;
        for (int64_t i = 0; i < len * inner; ++i) dst[i] += g[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  const Shape& ref = parts[0].shape();
  int64_t total = 0;
  for (const auto& p : parts) {
    check(p.ndim() == static_cast<int>(ref.size()), "concat: rank mismatch");
    for (int i = 0; i < p.ndim(); ++i)
      check(i == axis || p.dim(i) == ref[static_cast<size_t>(i)],
            "concat: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(ref));
    total += p.dim(axis);
  }
  Shape out_shape = ref;
  out_shape[static_cast<size_t>(axis)] = total;
  Tensor<T> out(out_shape);
  int64_t outer, n, inner;
  detail::axis_split(out_shape, axis, &outer, &n, &inner);
  T* po = out.data();
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int64_t pn = p.dim(axis);
    const T* pp = p.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(pp + o * pn * inner, pp + (o + 1) * pn * inner,
                po + (o * n + offset) * inner);
    offset += pn;
  }
  bool any = false;
  for (const auto& p : parts)
    if (p.requires_grad()) any = true;
  if (any && active_tape<T>()) {
    std::vector<Tensor<T>> held = parts;
    Tensor<T> O = out;
    detail::record_op(out, [held, O, outer, n, inner]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      int64_t offset2 = 0;
      for (auto& p : held) {
        const int64_t p_n = p.numel() / (outer * inner);
        if (p.requires_grad()) {
          auto& gp = p.grad_buffer();
          for (int64_t o = 0; o < outer; ++o) {
            const T* g = go.data() + (o * n + offset2) * inner;
            T* dst = gp.data() + o * p_n * inner;
            for (int64_t i = 0; i < p_n * inner; ++i) dst[i] += g[i];
          }
        }
        offset2 += p_n;
      }
    });
  }
  return out;
}

// Zero padding on the two trailing axes of [B,C,H,W].
template <class T>
Tensor<T> pad2d(const Tensor<T>& x, int64_t top, int64_t bottom, int64_t left,
                int64_t right) {
  check(x.ndim() == 4, "pad2d: expected [B,C,H,W], got " + shape_str(x.shape()));
  check(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "pad2d: negative padding");
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Ho = H + top + bottom, Wo = W + left + right;
  Tensor<T> out({B, C, Ho, Wo});
  const T* px = x.data();
  T* po = out.data();
  for (int64_t bc = 0; bc < B * C; ++bc)
    for (int64_t h = 0; h < H; ++h)
      std::copy(px + (bc * H + h) * W, px + (bc * H + h + 1) * W,
                po + (bc * Ho + h + top) * Wo + left);
  if (detail::tracked<T>({&x})) {
    Tensor<T> X = x, O = out;
    detail::record_op(out, [X, O, B, C, H, W, Ho, Wo, top, left]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      auto& gx = X.grad_buffer();
      for (int64_t bc = 0; bc < B * C; ++bc)
        for (int64_t h = 0; h < H; ++h) {
          const T* g = go.data() + (bc * Ho + h + top) * Wo + left;
          T* dst = gx.data() + (bc * H + h) * W;
          for (int64_t w = 0; w < W; ++w) dst[w] += g[w];
        }
    });
  }
  return out;
}

// Fused (r, i) -> (r*m^p, i*m^p) with m = sqrt(r^2+i^2); magnitudes below
// 1e-12 map to zero with zero gradient. Used for power-law magnitude scaling
// where the exponent is a fixed constant.
template <class T>
std::pair<Tensor<T>, Tensor<T>> complex_pow_scale(const Tensor<T>& re,
                                                  const Tensor<T>& im, T p) {
  detail::check_same_shape("complex_pow_scale", re, im);
  Tensor<T> out_r(re.shape());
  Tensor<T> out_i(im.shape());
  const T* pr = re.data();
  const T* pi = im.data();
  T* por = out_r.data();
  T* poi = out_i.data();
  for (int64_t k = 0; k < re.numel(); ++k) {
    const T m = std::sqrt(pr[k] * pr[k] + pi[k] * pi[k]);
    if (m < T(1e-12)) {
      por[k] = T(0);
      poi[k] = T(0);
    } else {
      const T s = std::pow(m, p);
      por[k] = pr[k] * s;
      poi[k] = pi[k] * s;
    }
  }
  if (detail::tracked<T>({&re, &im})) {
    Tensor<T> R = re, I = im, Or = out_r, Oi = out_i;
    auto backward_fn = [R, I, Or, Oi, p]() mutable {
      const auto& gor = Or.grad_view();
      const auto& goi = Oi.grad_view();
      if (gor.empty() && goi.empty()) return;
      const T* pr2 = R.data();
      const T* pi2 = I.data();
      auto& gr = R.grad_buffer();
      auto& gi = I.grad_buffer();
      for (size_t k = 0; k < gr.size(); ++k) {
        const T r = pr2[k], i = pi2[k];
        const T m = std::sqrt(r * r + i * i);
        if (m < T(1e-12)) continue;
        const T mp = std::pow(m, p);
        const T mpm2 = std::pow(m, p - T(2));
        const T drr = mp + p * r * r * mpm2;
        const T dri = p * r * i * mpm2;
        const T dii = mp + p * i * i * mpm2;
        const T g_r = gor.empty() ? T(0) : gor[k];
        const T g_i = goi.empty() ? T(0) : goi[k];
        if (R.requires_grad()) gr[k] += g_r * drr + g_i * dri;
        if (I.requires_grad()) gi[k] += g_r * dri + g_i * dii;
      }
    };
    out_r.set_requires_grad(true);
    out_i.set_requires_grad(true);
    active_tape<T>()->record(backward_fn);
  }
  return {out_r, out_i};
}

// Non-differentiable unary map for constant tensors (input phase etc.).
template <class T, class Fn>
Tensor<T> map_constant(const Tensor<T>& x, Fn&& fn) {
  check(!x.requires_grad(), "map_constant: input must not require grad");
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < x.numel(); ++i) po[i] = fn(px[i]);
  return out;
}

}  // namespace cadb
