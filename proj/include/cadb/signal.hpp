// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// STFT analysis/synthesis and power-law compression. Analysis runs on plain
// (constant) input; synthesis is a differentiable primitive so gradients flow
// from waveform losses back to the spectral planes.

#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "cadb/ops.hpp"

namespace cadb {

enum class Window { HannSqrt, Hann, Hamming };

struct StftConfig {
  int sample_rate = 16000;
  int64_t n_fft = 400;
  int64_t win_length = 400;
  int64_t hop_length = 100;
  Window window = Window::HannSqrt;

  int64_t freq_bins() const { return n_fft / 2 + 1; }

  void validate() const {
    check(n_fft > 0 && win_length > 0 && hop_length > 0, "stft config: sizes must be positive");
    check(hop_length <= win_length && win_length <= n_fft,
          "stft config: need hop <= win <= n_fft, got hop " + std::to_string(hop_length) +
              ", win " + std::to_string(win_length) + ", n_fft " + std::to_string(n_fft));
  }
};

inline const char* window_name(Window w) {
  switch (w) {
    case Window::HannSqrt: return "hann_sqrt";
    case Window::Hann: return "hann";
    case Window::Hamming: return "hamming";
  }
  return "?";
}

// Periodic windows.
inline std::vector<double> make_window(int64_t n, Window kind) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double c = std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
    switch (kind) {
      case Window::Hann: w[static_cast<size_t>(i)] = 0.5 * (1.0 - c); break;
      case Window::HannSqrt: w[static_cast<size_t>(i)] = std::sqrt(0.5 * (1.0 - c)); break;
      case Window::Hamming: w[static_cast<size_t>(i)] = 0.54 - 0.46 * c; break;
    }
  }
  return w;
}

// Steady-state overlap-add envelope of analysis*synthesis over one hop period.
inline bool cola_check(const StftConfig& cfg, double tol = 1e-6) {
  cfg.validate();
  const auto w = make_window(cfg.win_length, cfg.window);
  std::vector<double> env(static_cast<size_t>(cfg.hop_length), 0.0);
  for (int64_t n = 0; n < cfg.hop_length; ++n)
    for (int64_t pos = n; pos < cfg.win_length; pos += cfg.hop_length)
      env[static_cast<size_t>(n)] += w[static_cast<size_t>(pos)] * w[static_cast<size_t>(pos)];
  double lo = env[0], hi = env[0];
  for (double v : env) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi > 0.0 && (hi - lo) <= tol * hi;
}

template <class T>
struct ComplexSpectrogram {
  Tensor<T> real;  // [T, F]
  Tensor<T> imag;  // [T, F]
  StftConfig config;
  int64_t original_length = 0;

  int64_t frames() const { return real.dim(0); }
  int64_t bins() const { return real.dim(1); }

  Tensor<T> magnitude() const {
    Tensor<T> m(real.shape());
    const T* pr = real.data();
    const T* pi = imag.data();
    T* pm = m.data();
    for (int64_t i = 0; i < m.numel(); ++i)
      pm[i] = std::sqrt(pr[i] * pr[i] + pi[i] * pi[i]);
    return m;
  }

  Tensor<T> phase() const {
    Tensor<T> p(real.shape());
    const T* pr = real.data();
    const T* pi = imag.data();
    T* pp = p.data();
    for (int64_t i = 0; i < p.numel(); ++i)
      pp[i] = (pr[i] == T(0) && pi[i] == T(0)) ? T(0) : std::atan2(pi[i], pr[i]);
    return p;
  }
};

namespace detail {

// Onesided DFT tables, [F, n_fft] row-major, built in double then cast.
template <class T>
struct DftTables {
  std::vector<T> cos_t, sin_t;
  int64_t n_fft, bins;
};

template <class T>
DftTables<T> make_dft_tables(int64_t n_fft) {
  const int64_t F = n_fft / 2 + 1;
  DftTables<T> t;
  t.n_fft = n_fft;
  t.bins = F;
  t.cos_t.resize(static_cast<size_t>(F * n_fft));
  t.sin_t.resize(static_cast<size_t>(F * n_fft));
  for (int64_t k = 0; k < F; ++k)
    for (int64_t n = 0; n < n_fft; ++n) {
      const double ang = 2.0 * M_PI * static_cast<double>(k) * static_cast<double>(n) /
                         static_cast<double>(n_fft);
      t.cos_t[static_cast<size_t>(k * n_fft + n)] = static_cast<T>(std::cos(ang));
      t.sin_t[static_cast<size_t>(k * n_fft + n)] = static_cast<T>(std::sin(ang));
    }
  return t;
}

inline int64_t reflect_index(int64_t i, int64_t n) {
  // reflect without repeating the edge sample: -1 -> 1, n -> n-2
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace detail

template <class T>
int64_t stft_frame_count(int64_t length, const StftConfig& cfg) {
  const int64_t padded = length + cfg.win_length;
  return 1 + (padded - cfg.win_length) / cfg.hop_length;
}

template <class T>
ComplexSpectrogram<T> stft(const Tensor<T>& waveform, const StftConfig& cfg) {
  cfg.validate();
  check(waveform.ndim() == 1, "stft: waveform must be 1-D, got " + shape_str(waveform.shape()));
  const int64_t L = waveform.dim(0);
  check(L >= cfg.win_length, "stft: input of length " + std::to_string(L) +
                                 " shorter than required minimum " +
                                 std::to_string(cfg.win_length));

  const int64_t pad = cfg.win_length / 2;
  const int64_t Lp = L + 2 * pad;
  std::vector<T> padded(static_cast<size_t>(Lp));
  const T* px = waveform.data();
  for (int64_t i = 0; i < Lp; ++i)
    padded[static_cast<size_t>(i)] = px[detail::reflect_index(i - pad, L)];

  const int64_t frames = 1 + (Lp - cfg.win_length) / cfg.hop_length;
  const int64_t F = cfg.freq_bins();
  const int64_t off = (cfg.n_fft - cfg.win_length) / 2;  // center short windows
  const auto win = make_window(cfg.win_length, cfg.window);

  std::vector<T> fm(static_cast<size_t>(frames * cfg.n_fft), T(0));
  for (int64_t t = 0; t < frames; ++t) {
    T* frow = fm.data() + t * cfg.n_fft + off;
    const T* src = padded.data() + t * cfg.hop_length;
    for (int64_t n = 0; n < cfg.win_length; ++n)
      frow[n] = src[n] * static_cast<T>(win[static_cast<size_t>(n)]);
  }

  const auto tables = detail::make_dft_tables<T>(cfg.n_fft);
  ComplexSpectrogram<T> spec;
  spec.config = cfg;
  spec.original_length = L;
  spec.real = Tensor<T>({frames, F});
  spec.imag = Tensor<T>({frames, F});
  // real[t,k] = sum_n frame[t,n] cos(2pi k n / N); imag[t,k] = -sum_n ... sin
  detail::gemm_nt(frames, F, cfg.n_fft, fm.data(), tables.cos_t.data(), spec.real.data(),
                  false);
  detail::gemm_nt(frames, F, cfg.n_fft, fm.data(), tables.sin_t.data(), spec.imag.data(),
                  false);
  T* pi = spec.imag.data();
  for (int64_t i = 0; i < spec.imag.numel(); ++i) pi[i] = -pi[i];
  return spec;
}

// Differentiable inverse STFT of batched planes [B,T,F] -> [B,L]. Synthesis
// window and window-sum normalization; output trimmed to original_length.
template <class T>
Tensor<T> istft(const Tensor<T>& real, const Tensor<T>& imag, const StftConfig& cfg,
                int64_t original_length) {
  cfg.validate();
  check(cola_check(cfg), std::string("istft: window '") + window_name(cfg.window) +
                             "' at hop " + std::to_string(cfg.hop_length) +
                             " violates the COLA condition");
  check(real.ndim() == 3 && real.shape() == imag.shape(),
        "istft: expected matching [B,T,F] planes, got " + shape_str(real.shape()) +
            " and " + shape_str(imag.shape()));
  check(original_length > 0, "istft: original_length not set");
  const int64_t B = real.dim(0), frames = real.dim(1), F = real.dim(2);
  check(F == cfg.freq_bins(), "istft: bins " + std::to_string(F) +
                                  " do not match config (" + std::to_string(cfg.freq_bins()) + ")");

  const int64_t N = cfg.n_fft;
  const int64_t pad = cfg.win_length / 2;
  const int64_t Lp =
      std::max((frames - 1) * cfg.hop_length + cfg.win_length, pad + original_length);

  const auto tables = detail::make_dft_tables<T>(N);
  const auto win = make_window(cfg.win_length, cfg.window);
  const int64_t off = (N - cfg.win_length) / 2;

  // windowed-synthesis coefficients folded into the IDFT weights
  // x_t[n] = sum_k wk[k]/N * (re cos + (-im) sin); then * win[n]
  std::vector<T> wk(static_cast<size_t>(F), T(2) / static_cast<T>(N));
  wk[0] = T(1) / static_cast<T>(N);
  if (N % 2 == 0) wk[static_cast<size_t>(F - 1)] = T(1) / static_cast<T>(N);

  // envelope of overlapped window products (analysis * synthesis)
  std::vector<T> env(static_cast<size_t>(Lp), T(0));
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t n = 0; n < cfg.win_length; ++n) {
      const double wv = win[static_cast<size_t>(n)];
      env[static_cast<size_t>(t * cfg.hop_length + n)] += static_cast<T>(wv * wv);
    }
  for (auto& e : env) e = std::max(e, T(1e-10));

  auto synth = [&](const T* pre, const T* pim, T* out_row) {
    std::vector<T> a(static_cast<size_t>(frames * F));
    std::vector<T> b(static_cast<size_t>(frames * F));
    for (int64_t t = 0; t < frames; ++t)
      for (int64_t k = 0; k < F; ++k) {
        a[static_cast<size_t>(t * F + k)] = wk[static_cast<size_t>(k)] * pre[t * F + k];
        b[static_cast<size_t>(t * F + k)] = -wk[static_cast<size_t>(k)] * pim[t * F + k];
      }
    std::vector<T> xt(static_cast<size_t>(frames * N));
    detail::gemm_nn(frames, N, F, a.data(), tables.cos_t.data(), xt.data(), false);
    detail::gemm_nn(frames, N, F, b.data(), tables.sin_t.data(), xt.data(), true);
    std::vector<T> buf(static_cast<size_t>(Lp), T(0));
    for (int64_t t = 0; t < frames; ++t) {
      const T* row = xt.data() + t * N + off;
      T* dst = buf.data() + t * cfg.hop_length;
      for (int64_t n = 0; n < cfg.win_length; ++n)
        dst[n] += row[n] * static_cast<T>(win[static_cast<size_t>(n)]);
    }
    for (int64_t i = 0; i < original_length; ++i)
      out_row[i] = buf[static_cast<size_t>(i + pad)] / env[static_cast<size_t>(i + pad)];
  };

  Tensor<T> out({B, original_length});
  for (int64_t bi = 0; bi < B; ++bi)
    synth(real.data() + bi * frames * F, imag.data() + bi * frames * F,
          out.data() + bi * original_length);

  if (detail::tracked<T>({&real, &imag})) {
    Tensor<T> R = real, I = imag, O = out;
    auto tab = std::make_shared<detail::DftTables<T>>(tables);
    auto env_s = std::make_shared<std::vector<T>>(env);
    auto win_s = std::make_shared<std::vector<double>>(win);
    auto wk_s = std::make_shared<std::vector<T>>(wk);
    const int64_t hop = cfg.hop_length, wl = cfg.win_length;
    detail::record_op(out, [R, I, O, tab, env_s, win_s, wk_s, B, frames, F, N, Lp, pad,
                            hop, wl, off, original_length]() mutable {
      const auto& go = O.grad_view();
      if (go.empty()) return;
      for (int64_t bi = 0; bi < B; ++bi) {
        // adjoint of trim + envelope division
        std::vector<T> gbuf(static_cast<size_t>(Lp), T(0));
        const T* g = go.data() + bi * original_length;
        for (int64_t i = 0; i < original_length; ++i)
          gbuf[static_cast<size_t>(i + pad)] = g[i] / (*env_s)[static_cast<size_t>(i + pad)];
        // adjoint of windowed overlap-add
        std::vector<T> gxt(static_cast<size_t>(frames * N), T(0));
        for (int64_t t = 0; t < frames; ++t) {
          T* row = gxt.data() + t * N + off;
          const T* src = gbuf.data() + t * hop;
          for (int64_t n = 0; n < wl; ++n)
            row[n] = src[n] * static_cast<T>((*win_s)[static_cast<size_t>(n)]);
        }
        // adjoint of the IDFT
        std::vector<T> ga(static_cast<size_t>(frames * F));
        std::vector<T> gb(static_cast<size_t>(frames * F));
        detail::gemm_nt(frames, F, N, gxt.data(), tab->cos_t.data(), ga.data(), false);
        detail::gemm_nt(frames, F, N, gxt.data(), tab->sin_t.data(), gb.data(), false);
        if (R.requires_grad()) {
          auto& gr = R.grad_buffer();
          for (int64_t i = 0; i < frames * F; ++i)
            gr[static_cast<size_t>(bi * frames * F + i)] +=
                ga[static_cast<size_t>(i)] * (*wk_s)[static_cast<size_t>(i % F)];
        }
        if (I.requires_grad()) {
          auto& gi = I.grad_buffer();
          for (int64_t i = 0; i < frames * F; ++i)
            gi[static_cast<size_t>(bi * frames * F + i)] -=
                gb[static_cast<size_t>(i)] * (*wk_s)[static_cast<size_t>(i % F)];
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> istft(const ComplexSpectrogram<T>& spec) {
  const int64_t frames = spec.frames(), F = spec.bins();
  Tensor<T> re = Tensor<T>({1, frames, F}, std::vector<T>(spec.real.vec()));
  Tensor<T> im = Tensor<T>({1, frames, F}, std::vector<T>(spec.imag.vec()));
  Tensor<T> out = istft(re, im, spec.config, spec.original_length);
  return Tensor<T>({spec.original_length}, std::vector<T>(out.vec()));
}

// magnitude m -> m^c with phase preserved; real/imag rescaled by m^(c-1).
template <class T>
ComplexSpectrogram<T> power_compress(const ComplexSpectrogram<T>& spec, T c) {
  check(c > T(0), "power_compress: exponent must be positive, got " + std::to_string(c));
  check(c <= T(1), "power_compress: exponent must be <= 1, got " + std::to_string(c));
  ComplexSpectrogram<T> out = spec;
  auto scaled = complex_pow_scale(spec.real, spec.imag, c - T(1));
  out.real = scaled.first;
  out.imag = scaled.second;
  return out;
}

template <class T>
ComplexSpectrogram<T> power_decompress(const ComplexSpectrogram<T>& spec, T c) {
  check(c > T(0), "power_decompress: exponent must be positive, got " + std::to_string(c));
  check(c <= T(1), "power_decompress: exponent must be <= 1, got " + std::to_string(c));
  ComplexSpectrogram<T> out = spec;
  auto scaled = complex_pow_scale(spec.real, spec.imag, T(1) / c - T(1));
  out.real = scaled.first;
  out.imag = scaled.second;
  return out;
}

// Network input: compressed (magnitude, real, imag) stacked on a trailing
// channel axis, with the uncompressed phase kept for reconstruction.
template <class T>
struct NetworkInput {
  Tensor<T> packed;      // [B, T, F, 3]
  Tensor<T> phase;       // [B, T, F], uncompressed
  Tensor<T> magnitude;   // [B, T, F], compressed (packed channel 0)
  StftConfig config;
  int64_t original_length = 0;
};

template <class T>
NetworkInput<T> pack_input(const std::vector<ComplexSpectrogram<T>>& batch, T c) {
  check(!batch.empty(), "pack_input: empty batch");
  const int64_t frames = batch[0].frames(), F = batch[0].bins();
  const int64_t B = static_cast<int64_t>(batch.size());
  NetworkInput<T> ni;
  ni.config = batch[0].config;
  ni.original_length = batch[0].original_length;
  ni.packed = Tensor<T>({B, frames, F, 3});
  ni.phase = Tensor<T>({B, frames, F});
  ni.magnitude = Tensor<T>({B, frames, F});
  for (int64_t b = 0; b < B; ++b) {
    const auto& s = batch[static_cast<size_t>(b)];
    check(s.frames() == frames && s.bins() == F, "pack_input: ragged batch");
    check(s.original_length == ni.original_length, "pack_input: ragged original lengths");
    ComplexSpectrogram<T> comp = power_compress(s, c);
    Tensor<T> ph = s.phase();
    const T* pr = comp.real.data();
    const T* pim = comp.imag.data();
    const T* pp = ph.data();
    T* packed = ni.packed.data() + b * frames * F * 3;
    T* phase = ni.phase.data() + b * frames * F;
    T* mag = ni.magnitude.data() + b * frames * F;
    for (int64_t i = 0; i < frames * F; ++i) {
      const T m = std::sqrt(pr[i] * pr[i] + pim[i] * pim[i]);
      packed[i * 3 + 0] = m;
      packed[i * 3 + 1] = pr[i];
      packed[i * 3 + 2] = pim[i];
      phase[i] = pp[i];
      mag[i] = m;
    }
  }
  return ni;
}

template <class T>
NetworkInput<T> pack_input(const ComplexSpectrogram<T>& spec, T c) {
  return pack_input(std::vector<ComplexSpectrogram<T>>{spec}, c);
}

}  // namespace cadb
