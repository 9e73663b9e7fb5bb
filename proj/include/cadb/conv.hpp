// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Convolution primitives (cross-correlation semantics, no kernel flip).

#pragma once

#include <string>

#include "cadb/tensor.hpp"

namespace cadb {

struct Conv2dSpec {
  int64_t stride_h = 1, stride_w = 1;
  int64_t dil_h = 1, dil_w = 1;
  int64_t pad_h = 0, pad_w = 0;
};

namespace detail {

inline int64_t conv_out_dim(int64_t in, int64_t pad, int64_t dil, int64_t k, int64_t stride) {
  return (in + 2 * pad - dil * (k - 1) - 1) / stride + 1;
}

}  // namespace detail

// input [B,Cin,H,W], kernel [Cout,Cin,kH,kW], optional bias [Cout].
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv2dSpec& spec = {}) {
  check(x.ndim() == 4, "conv2d: input must be [B,Cin,H,W], got " + shape_str(x.shape()));
  check(kernel.ndim() == 4,
        "conv2d: kernel must be [Cout,Cin,kH,kW], got " + shape_str(kernel.shape()));
  check(x.dim(1) == kernel.dim(1),
        "conv2d: input channels " + shape_str(x.shape()) + " do not match kernel " +
            shape_str(kernel.shape()));
  check(spec.dil_h >= 1 && spec.dil_w >= 1, "conv2d: dilation must be >= 1");
  check(spec.stride_h >= 1 && spec.stride_w >= 1, "conv2d: stride must be >= 1");
  const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = kernel.dim(0), kH = kernel.dim(2), kW = kernel.dim(3);
  const int64_t Ho = detail::conv_out_dim(H, spec.pad_h, spec.dil_h, kH, spec.stride_h);
  const int64_t Wo = detail::conv_out_dim(W, spec.pad_w, spec.dil_w, kW, spec.stride_w);
  check(Ho >= 1 && Wo >= 1, "conv2d: zero-size output for input " + shape_str(x.shape()) +
                                " and kernel " + shape_str(kernel.shape()));
  if (bias.defined())
    check(bias.numel() == Cout, "conv2d: bias " + shape_str(bias.shape()) +
                                    " does not match Cout " + std::to_string(Cout));

  Tensor<T> out({B, Cout, Ho, Wo});
  const T* px = x.data();
  const T* pk = kernel.data();
  T* po = out.data();
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t co = 0; co < Cout; ++co) {
      T* oplane = po + (b * Cout + co) * Ho * Wo;
      const T bv = bias.defined() ? bias.data()[co] : T(0);
      for (int64_t i = 0; i < Ho * Wo; ++i) oplane[i] = bv;
      for (int64_t ci = 0; ci < Cin; ++ci) {
        const T* xplane = px + (b * Cin + ci) * H * W;
        const T* krow = pk + ((co * Cin + ci) * kH) * kW;
        for (int64_t ih = 0; ih < kH; ++ih) {
          for (int64_t iw = 0; iw < kW; ++iw) {
            const T kv = krow[ih * kW + iw];
            if (kv == T(0)) continue;
            for (int64_t oh = 0; oh < Ho; ++oh) {
              const int64_t src_h = oh * spec.stride_h - spec.pad_h + ih * spec.dil_h;
              if (src_h < 0 || src_h >= H) continue;
              const T* xrow = xplane + src_h * W;
              T* orow = oplane + oh * Wo;
              for (int64_t ow = 0; ow < Wo; ++ow) {
                const int64_t src_w = ow * spec.stride_w - spec.pad_w + iw * spec.dil_w;
                if (src_w < 0 || src_w >= W) continue;
                orow[ow] += kv * xrow[src_w];
              }
            }
          }
        }
      }
    }
  }
  if (detail::tracked<T>({&x, &kernel, &bias})) {
    Tensor<T> X = x, K = kernel, Bi = bias, O = out;
    detail::record_op(out, [X, K, Bi, O, spec, B, Cin, Cout, H, W, Ho, Wo, kH, kW]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      const T* px2 = X.data();
      const T* pk2 = K.data();
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t co = 0; co < Cout; ++co) {
          const T* gplane = go.data() + (b * Cout + co) * Ho * Wo;
          if (Bi.defined() && Bi.requires_grad()) {
            T acc = T(0);
            for (int64_t i = 0; i < Ho * Wo; ++i) acc += gplane[i];
            Bi.grad_buffer()[static_cast<size_t>(co)] += acc;
          }
          for (int64_t ci = 0; ci < Cin; ++ci) {
            const T* xplane = px2 + (b * Cin + ci) * H * W;
            T* gx_plane = X.requires_grad()
                              ? X.grad_buffer().data() + (b * Cin + ci) * H * W
                              : nullptr;
            for (int64_t ih = 0; ih < kH; ++ih) {
              for (int64_t iw = 0; iw < kW; ++iw) {
                const int64_t kidx = ((co * Cin + ci) * kH + ih) * kW + iw;
                const T kv = pk2[kidx];
                T kacc = T(0);
                for (int64_t oh = 0; oh < Ho; ++oh) {
                  const int64_t src_h = oh * spec.stride_h - spec.pad_h + ih * spec.dil_h;
                  if (src_h < 0 || src_h >= H) continue;
                  const T* grow = gplane + oh * Wo;
                  const T* xrow = xplane + src_h * W;
                  T* gx_row = gx_plane ? gx_plane + src_h * W : nullptr;
                  for (int64_t ow = 0; ow < Wo; ++ow) {
                    const int64_t src_w =
                        ow * spec.stride_w - spec.pad_w + iw * spec.dil_w;
                    if (src_w < 0 || src_w >= W) continue;
                    kacc += grow[ow] * xrow[src_w];
                    if (gx_row) gx_row[src_w] += grow[ow] * kv;
                  }
                }
                if (K.requires_grad()) K.grad_buffer()[static_cast<size_t>(kidx)] += kacc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// input [B,Cin,H,W], kernel [Cin,Cout,kH,kW], optional bias [Cout].
// Output dims: (in-1)*stride - 2*pad + kernel.
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& kernel,
                           const Tensor<T>& bias, int64_t stride_h, int64_t stride_w,
                           int64_t pad_h, int64_t pad_w) {
  check(x.ndim() == 4, "conv_transpose2d: input must be [B,Cin,H,W], got " +
                           shape_str(x.shape()));
  check(kernel.ndim() == 4, "conv_transpose2d: kernel must be [Cin,Cout,kH,kW], got " +
                                shape_str(kernel.shape()));
  check(x.dim(1) == kernel.dim(0),
        "conv_transpose2d: input channels " + shape_str(x.shape()) +
            " do not match kernel " + shape_str(kernel.shape()));
  const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = kernel.dim(1), kH = kernel.dim(2), kW = kernel.dim(3);
  const int64_t Ho = (H - 1) * stride_h - 2 * pad_h + kH;
  const int64_t Wo = (W - 1) * stride_w - 2 * pad_w + kW;
  check(Ho >= 1 && Wo >= 1, "conv_transpose2d: zero-size output");
  if (bias.defined())
    check(bias.numel() == Cout, "conv_transpose2d: bias " + shape_str(bias.shape()) +
                                    " does not match Cout " + std::to_string(Cout));

  Tensor<T> out({B, Cout, Ho, Wo});
  const T* px = x.data();
  const T* pk = kernel.data();
  T* po = out.data();
  if (bias.defined()) {
    const T* pb = bias.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t co = 0; co < Cout; ++co) {
        T* oplane = po + (b * Cout + co) * Ho * Wo;
        for (int64_t i = 0; i < Ho * Wo; ++i) oplane[i] = pb[co];
      }
  }
  for (int64_t b = 0; b < B; ++b)
    for (int64_t ci = 0; ci < Cin; ++ci) {
      const T* xplane = px + (b * Cin + ci) * H * W;
      for (int64_t co = 0; co < Cout; ++co) {
        T* oplane = po + (b * Cout + co) * Ho * Wo;
        const T* kpl = pk + (ci * Cout + co) * kH * kW;
        for (int64_t h = 0; h < H; ++h)
          for (int64_t w = 0; w < W; ++w) {
            const T xv = xplane[h * W + w];
            if (xv == T(0)) continue;
            for (int64_t ih = 0; ih < kH; ++ih) {
              const int64_t oh = h * stride_h - pad_h + ih;
              if (oh < 0 || oh >= Ho) continue;
              for (int64_t iw = 0; iw < kW; ++iw) {
                const int64_t ow = w * stride_w - pad_w + iw;
                if (ow < 0 || ow >= Wo) continue;
                oplane[oh * Wo + ow] += xv * kpl[ih * kW + iw];
              }
            }
          }
      }
    }
  if (detail::tracked<T>({&x, &kernel, &bias})) {
    Tensor<T> X = x, K = kernel, Bi = bias, O = out;
    detail::record_op(out, [X, K, Bi, O, stride_h, stride_w, pad_h, pad_w, B, Cin, Cout,
                            H, W, Ho, Wo, kH, kW]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      const T* px2 = X.data();
      const T* pk2 = K.data();
      if (Bi.defined() && Bi.requires_grad()) {
        auto& gb = Bi.grad_buffer();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t co = 0; co < Cout; ++co) {
            const T* gplane = go.data() + (b * Cout + co) * Ho * Wo;
            T acc = T(0);
            for (int64_t i = 0; i < Ho * Wo; ++i) acc += gplane[i];
            gb[static_cast<size_t>(co)] += acc;
          }
      }
      for (int64_t b = 0; b < B; ++b)
        for (int64_t ci = 0; ci < Cin; ++ci) {
          const T* xplane = px2 + (b * Cin + ci) * H * W;
          T* gx_plane = X.requires_grad()
                            ? X.grad_buffer().data() + (b * Cin + ci) * H * W
                            : nullptr;
          for (int64_t co = 0; co < Cout; ++co) {
            const T* gplane = go.data() + (b * Cout + co) * Ho * Wo;
            const int64_t kbase = (ci * Cout + co) * kH * kW;
            for (int64_t h = 0; h < H; ++h)
              for (int64_t w = 0; w < W; ++w) {
                T gx_acc = T(0);
                const T xv = xplane[h * W + w];
                for (int64_t ih = 0; ih < kH; ++ih) {
                  const int64_t oh = h * stride_h - pad_h + ih;
                  if (oh < 0 || oh >= Ho) continue;
                  for (int64_t iw = 0; iw < kW; ++iw) {
                    const int64_t ow = w * stride_w - pad_w + iw;
                    if (ow < 0 || ow >= Wo) continue;
                    const T g = gplane[oh * Wo + ow];
                    gx_acc += g * pk2[kbase + ih * kW + iw];
                    if (K.requires_grad())
                      K.grad_buffer()[static_cast<size_t>(kbase + ih * kW + iw)] += g * xv;
                  }
                }
                if (gx_plane) gx_plane[h * W + w] += gx_acc;
              }
          }
        }
    });
  }
  return out;
}

// Depthwise 1-D convolution over the last axis of [B,C,L] with odd kernel and
// same padding; weight [C,k], optional bias [C].
template <class T>
Tensor<T> depthwise_conv_chan(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(x.ndim() == 3, "depthwise_conv_chan: input must be [B,C,L], got " +
                           shape_str(x.shape()));
  check(w.ndim() == 2 && w.dim(0) == x.dim(1),
        "depthwise_conv_chan: weight " + shape_str(w.shape()) + " does not match input " +
            shape_str(x.shape()));
  const int64_t k = w.dim(1);
  check(k % 2 == 1, "depthwise_conv_chan: kernel must be odd, got " + std::to_string(k));
  const int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2), p = k / 2;
  if (b.defined()) check(b.numel() == C, "depthwise_conv_chan: bias shape mismatch");
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T* pw = w.data();
  T* po = out.data();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const int64_t c = bc % C;
    const T* row = px + bc * L;
    T* orow = po + bc * L;
    const T bv = b.defined() ? b.data()[c] : T(0);
    for (int64_t l = 0; l < L; ++l) {
      T acc = bv;
      const int64_t j0 = std::max<int64_t>(0, p - l);
      const int64_t j1 = std::min<int64_t>(k, L + p - l);
      for (int64_t j = j0; j < j1; ++j) acc += pw[c * k + j] * row[l + j - p];
      orow[l] = acc;
    }
  }
  if (detail::tracked<T>({&x, &w, &b})) {
    Tensor<T> X = x, Wt = w, Bi = b, O = out;
    detail::record_op(out, [X, Wt, Bi, O, B, C, L, k, p]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      const T* px2 = X.data();
      const T* pw2 = Wt.data();
      for (int64_t bc = 0; bc < B * C; ++bc) {
        const int64_t c = bc % C;
        const T* row = px2 + bc * L;
        const T* g = go.data() + bc * L;
        T* gx_row = X.requires_grad() ? X.grad_buffer().data() + bc * L : nullptr;
        if (Bi.defined() && Bi.requires_grad()) {
          T acc = T(0);
          for (int64_t l = 0; l < L; ++l) acc += g[l];
          Bi.grad_buffer()[static_cast<size_t>(c)] += acc;
        }
        for (int64_t l = 0; l < L; ++l) {
          const int64_t j0 = std::max<int64_t>(0, p - l);
          const int64_t j1 = std::min<int64_t>(k, L + p - l);
          for (int64_t j = j0; j < j1; ++j) {
            if (gx_row) gx_row[l + j - p] += g[l] * pw2[c * k + j];
            if (Wt.requires_grad())
              Wt.grad_buffer()[static_cast<size_t>(c * k + j)] += g[l] * row[l + j - p];
          }
        }
      }
    });
  }
  return out;
}

// Depthwise 1-D convolution over the middle axis of [B,L,C]; weight [C,k].
template <class T>
Tensor<T> depthwise_conv_seq(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(x.ndim() == 3, "depthwise_conv_seq: input must be [B,L,C], got " +
                           shape_str(x.shape()));
  check(w.ndim() == 2 && w.dim(0) == x.dim(2),
        "depthwise_conv_seq: weight " + shape_str(w.shape()) + " does not match input " +
            shape_str(x.shape()));
  const int64_t k = w.dim(1);
  check(k % 2 == 1, "depthwise_conv_seq: kernel must be odd, got " + std::to_string(k));
  const int64_t B = x.dim(0), L = x.dim(1), C = x.dim(2), p = k / 2;
  if (b.defined()) check(b.numel() == C, "depthwise_conv_seq: bias shape mismatch");
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T* pw = w.data();
  T* po = out.data();
  for (int64_t bi = 0; bi < B; ++bi) {
    const T* mat = px + bi * L * C;
    T* omat = po + bi * L * C;
    for (int64_t l = 0; l < L; ++l) {
      T* orow = omat + l * C;
      if (b.defined()) {
        const T* pb = b.data();
        for (int64_t c = 0; c < C; ++c) orow[c] = pb[c];
      } else {
        for (int64_t c = 0; c < C; ++c) orow[c] = T(0);
      }
      const int64_t j0 = std::max<int64_t>(0, p - l);
      const int64_t j1 = std::min<int64_t>(k, L + p - l);
      for (int64_t j = j0; j < j1; ++j) {
        const T* xrow = mat + (l + j - p) * C;
        for (int64_t c = 0; c < C; ++c) orow[c] += pw[c * k + j] * xrow[c];
      }
    }
  }
  if (detail::tracked<T>({&x, &w, &b})) {
    Tensor<T> X = x, Wt = w, Bi = b, O = out;
    detail::record_op(out, [X, Wt, Bi, O, B, L, C, k, p]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      const T* px2 = X.data();
      const T* pw2 = Wt.data();
      for (int64_t bi = 0; bi < B; ++bi) {
        const T* mat = px2 + bi * L * C;
        const T* gmat = go.data() + bi * L * C;
        T* gx_mat = X.requires_grad() ? X.grad_buffer().data() + bi * L * C : nullptr;
        for (int64_t l = 0; l < L; ++l) {
          const T* g = gmat + l * C;
          if (Bi.defined() && Bi.requires_grad()) {
            auto& gb = Bi.grad_buffer();
            for (int64_t c = 0; c < C; ++c) gb[static_cast<size_t>(c)] += g[c];
          }
          const int64_t j0 = std::max<int64_t>(0, p - l);
          const int64_t j1 = std::min<int64_t>(k, L + p - l);
          for (int64_t j = j0; j < j1; ++j) {
            const T* xrow = mat + (l + j - p) * C;
            T* gx_row = gx_mat ? gx_mat + (l + j - p) * C : nullptr;
            if (Wt.requires_grad()) {
              auto& gw = Wt.grad_buffer();
              for (int64_t c = 0; c < C; ++c)
                gw[static_cast<size_t>(c * k + j)] += g[c] * xrow[c];
            }
            if (gx_row)
              for (int64_t c = 0; c < C; ++c) gx_row[c] += g[c] * pw2[c * k + j];
          }
        }
      }
    });
  }
  return out;
}

}  // namespace cadb
