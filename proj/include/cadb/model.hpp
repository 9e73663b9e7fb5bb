// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Channel-aware dual-branch conformer for spectral masking: encoder with a
// dilated dense stack, N blocks pairing a channel feature branch (channel
// attention over unfolded T-F positions) with a band feature branch (cascaded
// time/frequency conformers whose attention fuses both branches), and twin
// mask/complex decoders.

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cadb/conv.hpp"
#include "cadb/ops.hpp"
#include "cadb/signal.hpp"

namespace cadb {

struct ModelConfig {
  int64_t channels = 64;       // C
  int64_t num_blocks = 4;      // N
  int64_t dense_depth = 4;     // dilation of block i is 2^i
  int64_t attention_heads = 4;
  int64_t conformer_kernel = 15;
  int64_t ffn_expansion = 4;
  double alpha = 0.5;
  double beta = 0.5;
  bool enable_cfb = true;
  bool enable_t_conformer = true;
  bool enable_f_conformer = true;
  double compression = 0.3;
  StftConfig stft;

  int64_t f_bins() const { return stft.freq_bins(); }
  int64_t f_half() const { return (f_bins() + 1) / 2; }  // ceil(F/2)

  void validate() const {
    stft.validate();
    check(channels >= 1, "model config: channels must be >= 1");
    check(num_blocks >= 1, "model config: num_blocks must be >= 1");
    check(dense_depth >= 1, "model config: dense_depth must be >= 1");
    check(attention_heads >= 1 && channels % attention_heads == 0,
          "model config: channels (" + std::to_string(channels) +
              ") must be divisible by attention_heads (" +
              std::to_string(attention_heads) + ")");
    check(conformer_kernel >= 1 && conformer_kernel % 2 == 1,
          "model config: conformer_kernel must be odd");
    check(ffn_expansion >= 1, "model config: ffn_expansion must be >= 1");
    check(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0,
          "model config: alpha/beta must lie in [0, 1]");
    check(compression > 0.0 && compression <= 1.0,
          "model config: compression exponent must lie in (0, 1]");
    check(enable_cfb || enable_t_conformer || enable_f_conformer,
          "model config: all branch toggles are disabled; enable at least one of "
          "cfb / t_conformer / f_conformer");
  }
};

// Table-style ablation variants.
inline ModelConfig apply_ablation(ModelConfig cfg, const std::string& name) {
  if (name == "full") {
  } else if (name == "no_cfb") {
    cfg.enable_cfb = false;
  } else if (name == "no_t_conformer") {
    cfg.enable_t_conformer = false;
  } else if (name == "no_f_conformer") {
    cfg.enable_f_conformer = false;
  } else if (name == "no_bfb") {
    cfg.enable_t_conformer = false;
    cfg.enable_f_conformer = false;
  } else {
    fail("unknown ablation '" + name +
         "' (expected: full, no_cfb, no_t_conformer, no_f_conformer, no_bfb)");
  }
  return cfg;
}

inline const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"full", "no_cfb", "no_t_conformer",
                                                 "no_f_conformer", "no_bfb"};
  return names;
}

// Named, ordered collection of every learnable tensor.
template <class T>
class ParameterSet {
 public:
  enum class Init { KaimingUniform, Zero, One, PRelu };

  struct Item {
    std::string name;
    Tensor<T> tensor;
    Init init;
    int64_t fan_in;
  };

  Tensor<T> create(const std::string& name, Shape shape, Init init, int64_t fan_in = 0) {
    check(index_.find(name) == index_.end(), "parameter '" + name + "' already exists");
    Tensor<T> t(std::move(shape));
    index_[name] = items_.size();
    items_.push_back(Item{name, t, init, fan_in});
    return t;
  }

  const std::vector<Item>& items() const { return items_; }

  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second].tensor;
  }

  int64_t total_parameters() const {
    int64_t n = 0;
    for (const auto& it : items_) n += it.tensor.numel();
    return n;
  }

  void set_requires_grad(bool b) {
    for (auto& it : items_) it.tensor.set_requires_grad(b);
  }

  void zero_grads() {
    for (auto& it : items_) it.tensor.zero_grad();
  }

  // Kaiming-uniform fan-in for weights, zeros for biases, ones/zeros for norm
  // affine. Each tensor draws from a stream keyed by its name, so a layer's
  // initial values do not depend on what else the model contains (ablation
  // variants share the init of their common layers).
  void initialize(uint64_t seed) {
    for (size_t i = 0; i < items_.size(); ++i) {
      Item& it = items_[i];
      uint64_t name_key = 1469598103934665603ull;  // FNV-1a
      for (char ch : it.name) {
        name_key ^= static_cast<unsigned char>(ch);
        name_key *= 1099511628211ull;
      }
      Rng rng(mix_seed(seed, name_key));
      T* p = it.tensor.data();
      switch (it.init) {
        case Init::Zero:
          for (int64_t k = 0; k < it.tensor.numel(); ++k) p[k] = T(0);
          break;
        case Init::One:
          for (int64_t k = 0; k < it.tensor.numel(); ++k) p[k] = T(1);
          break;
        case Init::PRelu:
          for (int64_t k = 0; k < it.tensor.numel(); ++k) p[k] = T(0.25);
          break;
        case Init::KaimingUniform: {
          const double bound = std::sqrt(6.0 / static_cast<double>(std::max<int64_t>(1, it.fan_in)));
          for (int64_t k = 0; k < it.tensor.numel(); ++k)
            p[k] = static_cast<T>(rng.uniform(-bound, bound));
          break;
        }
      }
    }
  }

  bool all_finite() const {
    for (const auto& it : items_)
      if (!it.tensor.all_finite()) return false;
    return true;
  }

 private:
  std::vector<Item> items_;
  std::map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

namespace layers {

// Convs that feed a normalization layer are created without bias: instance
// norm's mean subtraction nulls a per-channel constant, leaving a parameter
// with an identically zero gradient.
template <class T>
struct Conv2dLayer {
  Tensor<T> w, b;
  Conv2dSpec spec;

  Conv2dLayer() = default;
  Conv2dLayer(ParameterSet<T>& ps, const std::string& prefix, int64_t cin, int64_t cout,
              int64_t kh, int64_t kw, Conv2dSpec s = {}, bool with_bias = true)
      : spec(s) {
    w = ps.create(prefix + ".weight", {cout, cin, kh, kw},
                  ParameterSet<T>::Init::KaimingUniform, cin * kh * kw);
    if (with_bias) b = ps.create(prefix + ".bias", {cout}, ParameterSet<T>::Init::Zero);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, w, b, spec); }
};

template <class T>
struct ConvTranspose2dLayer {
  Tensor<T> w, b;
  int64_t stride_h = 1, stride_w = 1, pad_h = 0, pad_w = 0;

  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(ParameterSet<T>& ps, const std::string& prefix, int64_t cin,
                       int64_t cout, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
                       int64_t ph, int64_t pw, bool with_bias = true)
      : stride_h(sh), stride_w(sw), pad_h(ph), pad_w(pw) {
    w = ps.create(prefix + ".weight", {cin, cout, kh, kw},
                  ParameterSet<T>::Init::KaimingUniform, cin * kh * kw);
    if (with_bias) b = ps.create(prefix + ".bias", {cout}, ParameterSet<T>::Init::Zero);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv_transpose2d(x, w, b, stride_h, stride_w, pad_h, pad_w);
  }
};

template <class T>
struct LinearLayer {
  Tensor<T> w, b;

  LinearLayer() = default;
  LinearLayer(ParameterSet<T>& ps, const std::string& prefix, int64_t cin, int64_t cout) {
    w = ps.create(prefix + ".weight", {cout, cin}, ParameterSet<T>::Init::KaimingUniform,
                  cin);
    b = ps.create(prefix + ".bias", {cout}, ParameterSet<T>::Init::Zero);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, w, b); }
};

template <class T>
struct InstanceNorm2dLayer {
  Tensor<T> gain, bias;

  InstanceNorm2dLayer() = default;
  InstanceNorm2dLayer(ParameterSet<T>& ps, const std::string& prefix, int64_t channels) {
    gain = ps.create(prefix + ".gain", {channels}, ParameterSet<T>::Init::One);
    bias = ps.create(prefix + ".bias", {channels}, ParameterSet<T>::Init::Zero);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return instance_norm2d(x, gain, bias); }
};

template <class T>
struct LayerNormLayer {
  Tensor<T> gain, bias;

  LayerNormLayer() = default;
  LayerNormLayer(ParameterSet<T>& ps, const std::string& prefix, int64_t width) {
    gain = ps.create(prefix + ".gain", {width}, ParameterSet<T>::Init::One);
    bias = ps.create(prefix + ".bias", {width}, ParameterSet<T>::Init::Zero);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
};

template <class T>
struct PReluLayer {
  Tensor<T> slope;
  int axis = 1;

  PReluLayer() = default;
  PReluLayer(ParameterSet<T>& ps, const std::string& prefix, int64_t channels, int ax = 1)
      : axis(ax) {
    slope = ps.create(prefix + ".slope", {channels}, ParameterSet<T>::Init::PRelu);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return prelu(x, slope, axis); }
};

template <class T>
struct DepthwiseChanLayer {  // [B,C,L]
  Tensor<T> w, b;

  DepthwiseChanLayer() = default;
  DepthwiseChanLayer(ParameterSet<T>& ps, const std::string& prefix, int64_t channels,
                     int64_t kernel, bool with_bias = true) {
    w = ps.create(prefix + ".weight", {channels, kernel},
                  ParameterSet<T>::Init::KaimingUniform, kernel);
    if (with_bias)
      b = ps.create(prefix + ".bias", {channels}, ParameterSet<T>::Init::Zero);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return depthwise_conv_chan(x, w, b); }
};

template <class T>
struct DepthwiseSeqLayer {  // [B,L,C]
  Tensor<T> w, b;

  DepthwiseSeqLayer() = default;
  DepthwiseSeqLayer(ParameterSet<T>& ps, const std::string& prefix, int64_t channels,
                    int64_t kernel) {
    w = ps.create(prefix + ".weight", {channels, kernel},
                  ParameterSet<T>::Init::KaimingUniform, kernel);
    b = ps.create(prefix + ".bias", {channels}, ParameterSet<T>::Init::Zero);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return depthwise_conv_seq(x, w, b); }
};

// 1x1 conv applied to [B,C,L] without leaving the channel-major layout.
template <class T>
Tensor<T> pointwise_chan(const Conv2dLayer<T>& conv, const Tensor<T>& x) {
  const int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  Tensor<T> y = conv.forward(reshape(x, {B, C, 1, L}));
  return reshape(y, {B, y.dim(1), L});
}

}  // namespace layers

// ---------------------------------------------------------------------------
// building blocks
// ---------------------------------------------------------------------------

// Stack of dense-connected dilated convolutions. Block i reads the channel
// concatenation of the input and all previous outputs, dilates only the time
// axis (causal padding) and keeps the frequency width.
template <class T>
struct DilatedDense {
  std::vector<layers::Conv2dLayer<T>> convs;
  std::vector<layers::InstanceNorm2dLayer<T>> norms;
  std::vector<layers::PReluLayer<T>> acts;
  std::vector<int64_t> dilations;

  DilatedDense() = default;
  DilatedDense(ParameterSet<T>& ps, const std::string& prefix, int64_t channels,
               int64_t depth) {
    for (int64_t i = 0; i < depth; ++i) {
      const int64_t dil = int64_t(1) << i;
      dilations.push_back(dil);
      Conv2dSpec spec;
      spec.dil_h = dil;
      spec.pad_w = 1;
      const std::string p = prefix + ".block" + std::to_string(i);
      convs.emplace_back(ps, p + ".conv", channels * (i + 1), channels, 2, 3, spec,
                         /*with_bias=*/false);
      norms.emplace_back(ps, p + ".norm", channels);
      acts.emplace_back(ps, p + ".act", channels);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    std::vector<Tensor<T>> feats = {x};
    Tensor<T> out = x;
    for (size_t i = 0; i < convs.size(); ++i) {
      Tensor<T> input = feats.size() == 1 ? feats[0] : concat(feats, 1);
      Tensor<T> padded = pad2d(input, dilations[i], 0, 0, 0);
      out = acts[i].forward(norms[i].forward(convs[i].forward(padded)));
      feats.push_back(out);
    }
    return out;
  }
};

// Sandwich ConvForward: pointwise expand, depthwise over positions, swish,
// pointwise project, residual.
template <class T>
struct ConvForward {
  layers::Conv2dLayer<T> pw1, pw2;
  layers::DepthwiseChanLayer<T> dw;

  ConvForward() = default;
  ConvForward(ParameterSet<T>& ps, const std::string& prefix, int64_t channels) {
    pw1 = layers::Conv2dLayer<T>(ps, prefix + ".pw1", channels, 2 * channels, 1, 1);
    dw = layers::DepthwiseChanLayer<T>(ps, prefix + ".dw", 2 * channels, 3);
    pw2 = layers::Conv2dLayer<T>(ps, prefix + ".pw2", 2 * channels, channels, 1, 1);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = layers::pointwise_chan(pw1, x);
    h = dw.forward(h);
    h = swish(h);
    h = layers::pointwise_chan(pw2, h);
    return add(x, h);
  }
};

// Channel attention over unfolded positions: Q/K are gate-modulated copies of
// the input, the mixing matrix is C x C regardless of sequence length, and the
// product is applied across channels with a residual.
template <class T>
struct SelfChannelAttention {
  layers::DepthwiseChanLayer<T> gate_q, gate_k;

  SelfChannelAttention() = default;
  SelfChannelAttention(ParameterSet<T>& ps, const std::string& prefix, int64_t channels) {
    // no gate biases: the softmax over positions is shift-invariant
    gate_q = layers::DepthwiseChanLayer<T>(ps, prefix + ".gate_q", channels, 3,
                                           /*with_bias=*/false);
    gate_k = layers::DepthwiseChanLayer<T>(ps, prefix + ".gate_k", channels, 3,
                                           /*with_bias=*/false);
  }

  // W = softmax_rows(Q K^T), shape [B, C, C].
  Tensor<T> attention_weights(const Tensor<T>& f_in) const {
    Tensor<T> q = mul(f_in, softmax(gate_q.forward(f_in), 2));
    Tensor<T> k = mul(f_in, softmax(gate_k.forward(f_in), 2));
    return softmax(bmm(q, permute(k, {0, 2, 1})), 2);
  }

  Tensor<T> forward(const Tensor<T>& f_in) const {
    check(f_in.ndim() == 3, "self_channel_attention: expected [B,C,N], got " +
                                shape_str(f_in.shape()));
    Tensor<T> w = attention_weights(f_in);
    return add(bmm(w, f_in), f_in);
  }
};

// ConvForward -> Self-CA -> ConvForward over unfolded T-F positions. No
// conformer convolution module after the attention; the band branch does the
// local feature extraction downstream.
template <class T>
struct ChannelFeatureBranch {
  ConvForward<T> cf1, cf2;
  SelfChannelAttention<T> attn;
  long forward_calls = 0;

  ChannelFeatureBranch() = default;
  ChannelFeatureBranch(ParameterSet<T>& ps, const std::string& prefix, int64_t channels) {
    cf1 = ConvForward<T>(ps, prefix + ".cf1", channels);
    attn = SelfChannelAttention<T>(ps, prefix + ".attn", channels);
    cf2 = ConvForward<T>(ps, prefix + ".cf2", channels);
  }

  // [B,C,T,Fh] -> [B,C,T*Fh]
  Tensor<T> forward(const Tensor<T>& x) {
    ++forward_calls;
    const int64_t B = x.dim(0), C = x.dim(1), n_pos = x.dim(2) * x.dim(3);
    Tensor<T> f = reshape(x, {B, C, n_pos});
    f = cf1.forward(f);
    f = attn.forward(f);
    return cf2.forward(f);
  }
};

// Multi-head attention over [S,L,C] sequences; batch axis processed in chunks
// so inference on long sequences never materializes all score planes at once.
template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               int64_t heads) {
  const int64_t S = q.dim(0), L = q.dim(1), C = q.dim(2);
  check(C % heads == 0, "attention: channels not divisible by heads");
  const int64_t d = C / heads;
  auto split = [&](const Tensor<T>& t) {
    return reshape(permute(reshape(t, {S, L, heads, d}), {0, 2, 1, 3}), {S * heads, L, d});
  };
  Tensor<T> qh = split(q), kh = split(k), vh = split(v);
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  const int64_t rows = S * heads;
  const int64_t chunk = 64;
  std::vector<Tensor<T>> outs;
  for (int64_t start = 0; start < rows; start += chunk) {
    const int64_t len = std::min(chunk, rows - start);
    Tensor<T> qs = slice(qh, 0, start, len);
    Tensor<T> ks = slice(kh, 0, start, len);
    Tensor<T> vs = slice(vh, 0, start, len);
    Tensor<T> scores = mul_scalar(bmm(qs, permute(ks, {0, 2, 1})), scale);
    outs.push_back(bmm(softmax(scores, 2), vs));
  }
  Tensor<T> oh = outs.size() == 1 ? outs[0] : concat(outs, 0);
  return reshape(permute(reshape(oh, {S, heads, L, d}), {0, 2, 1, 3}), {S, L, C});
}

// Conformer block with fused attention: the query input is alpha * X_f +
// beta * F_out while keys/values are projections of F_out alone. When the
// channel branch is disabled the block degenerates to self-attention.
template <class T>
struct ConformerBlock {
  layers::LayerNormLayer<T> ln_ff1, ln_attn_q, ln_attn_kv, ln_conv, conv_norm, ln_ff2,
      ln_final;
  layers::LinearLayer<T> ff1_in, ff1_out, ff2_in, ff2_out;
  layers::LinearLayer<T> wq, wk, wv, wo;
  layers::LinearLayer<T> conv_pw1, conv_pw2;
  layers::DepthwiseSeqLayer<T> conv_dw;
  int64_t heads = 1;
  T alpha = T(0.5), beta = T(0.5);

  ConformerBlock() = default;
  ConformerBlock(ParameterSet<T>& ps, const std::string& prefix, int64_t c,
                 int64_t expansion, int64_t kernel, int64_t n_heads, T a, T b)
      : heads(n_heads), alpha(a), beta(b) {
    ln_ff1 = layers::LayerNormLayer<T>(ps, prefix + ".ff1.norm", c);
    ff1_in = layers::LinearLayer<T>(ps, prefix + ".ff1.in", c, expansion * c);
    ff1_out = layers::LinearLayer<T>(ps, prefix + ".ff1.out", expansion * c, c);
    ln_attn_q = layers::LayerNormLayer<T>(ps, prefix + ".attn.norm_q", c);
    ln_attn_kv = layers::LayerNormLayer<T>(ps, prefix + ".attn.norm_kv", c);
    wq = layers::LinearLayer<T>(ps, prefix + ".attn.q", c, c);
    wk = layers::LinearLayer<T>(ps, prefix + ".attn.k", c, c);
    wv = layers::LinearLayer<T>(ps, prefix + ".attn.v", c, c);
    wo = layers::LinearLayer<T>(ps, prefix + ".attn.out", c, c);
    ln_conv = layers::LayerNormLayer<T>(ps, prefix + ".conv.norm_in", c);
    conv_pw1 = layers::LinearLayer<T>(ps, prefix + ".conv.pw1", c, 2 * c);
    conv_dw = layers::DepthwiseSeqLayer<T>(ps, prefix + ".conv.dw", c, kernel);
    conv_norm = layers::LayerNormLayer<T>(ps, prefix + ".conv.norm_mid", c);
    conv_pw2 = layers::LinearLayer<T>(ps, prefix + ".conv.pw2", c, c);
    ln_ff2 = layers::LayerNormLayer<T>(ps, prefix + ".ff2.norm", c);
    ff2_in = layers::LinearLayer<T>(ps, prefix + ".ff2.in", c, expansion * c);
    ff2_out = layers::LinearLayer<T>(ps, prefix + ".ff2.out", expansion * c, c);
    ln_final = layers::LayerNormLayer<T>(ps, prefix + ".final_norm", c);
  }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& f_out) const {
    check(x.ndim() == 3, "conformer: expected [S,L,C], got " + shape_str(x.shape()));
    if (f_out.defined())
      check(f_out.shape() == x.shape(),
            "conformer: sequence layout mismatch between X_f " + shape_str(x.shape()) +
                " and reshaped F_out " + shape_str(f_out.shape()));
    auto half_ffn = [](const layers::LayerNormLayer<T>& ln, const layers::LinearLayer<T>& in,
                       const layers::LinearLayer<T>& out, const Tensor<T>& h) {
      return add(h, mul_scalar(out.forward(swish(in.forward(ln.forward(h)))), T(0.5)));
    };
    Tensor<T> x_f = half_ffn(ln_ff1, ff1_in, ff1_out, x);
    const Tensor<T>& kv = f_out.defined() ? f_out : x_f;
    // pre-norm attention over the fused query and the shared key/value source
    Tensor<T> fused = ln_attn_q.forward(add(mul_scalar(x_f, alpha), mul_scalar(kv, beta)));
    Tensor<T> kv_n = ln_attn_kv.forward(kv);
    Tensor<T> att = multi_head_attention(wq.forward(fused), wk.forward(kv_n),
                                         wv.forward(kv_n), heads);
    Tensor<T> x2 = add(x_f, wo.forward(att));

    Tensor<T> c = ln_conv.forward(x2);
    c = glu(conv_pw1.forward(c));
    c = conv_dw.forward(c);
    c = swish(conv_norm.forward(c));
    c = conv_pw2.forward(c);
    Tensor<T> x3 = add(x2, c);

    return ln_final.forward(half_ffn(ln_ff2, ff2_in, ff2_out, x3));
  }
};

// Holds the two feature carriers of one block: band features on the T-F grid
// and channel features over the unfolded positions (N_pos == T * Fh).
template <class T>
struct BlockState {
  Tensor<T> band_features;     // [B,C,T,Fh]
  Tensor<T> channel_features;  // [B,C,T*Fh]
};

template <class T>
struct CadbBlock {
  std::optional<ChannelFeatureBranch<T>> cfb;
  std::optional<ConformerBlock<T>> t_conf;
  std::optional<ConformerBlock<T>> f_conf;

  CadbBlock() = default;
  CadbBlock(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg) {
    if (cfg.enable_cfb) cfb.emplace(ps, prefix + ".cfb", cfg.channels);
    if (cfg.enable_t_conformer)
      t_conf.emplace(ps, prefix + ".t_conformer", cfg.channels, cfg.ffn_expansion,
                     cfg.conformer_kernel, cfg.attention_heads,
                     static_cast<T>(cfg.alpha), static_cast<T>(cfg.beta));
    if (cfg.enable_f_conformer)
      f_conf.emplace(ps, prefix + ".f_conformer", cfg.channels, cfg.ffn_expansion,
                     cfg.conformer_kernel, cfg.attention_heads,
                     static_cast<T>(cfg.alpha), static_cast<T>(cfg.beta));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const int64_t B = x.dim(0), C = x.dim(1), Tn = x.dim(2), Fh = x.dim(3);
    BlockState<T> state;
    state.band_features = x;
    if (cfb) state.channel_features = cfb->forward(x);  // computed once, shared below

    if (!t_conf && !f_conf) {
      // band branch ablated: fold the channel features back as a residual
      return add(x, reshape(state.channel_features, x.shape()));
    }

    // sequence layouts: time sequences [B*Fh, T, C], frequency sequences [B*T, Fh, C]
    auto to_time = [&](const Tensor<T>& t) {
      return reshape(permute(t, {0, 3, 2, 1}), {B * Fh, Tn, C});
    };
    auto from_time = [&](const Tensor<T>& t) {
      return permute(reshape(t, {B, Fh, Tn, C}), {0, 3, 2, 1});
    };
    auto to_freq = [&](const Tensor<T>& t) {
      return reshape(permute(t, {0, 2, 3, 1}), {B * Tn, Fh, C});
    };
    auto from_freq = [&](const Tensor<T>& t) {
      return permute(reshape(t, {B, Tn, Fh, C}), {0, 3, 1, 2});
    };

    Tensor<T> f_out_grid;
    if (cfb) f_out_grid = reshape(state.channel_features, {B, C, Tn, Fh});

    Tensor<T> cur = x;
    if (t_conf) {
      Tensor<T> f_seq;
      if (cfb) f_seq = to_time(f_out_grid);
      cur = from_time(t_conf->forward(to_time(cur), f_seq));
    }
    if (f_conf) {
      Tensor<T> f_seq;
      if (cfb) f_seq = to_freq(f_out_grid);
      cur = from_freq(f_conf->forward(to_freq(cur), f_seq));
    }
    return cur;
  }
};

template <class T>
struct Encoder {
  layers::Conv2dLayer<T> in_conv, down_conv;
  layers::InstanceNorm2dLayer<T> in_norm, down_norm;
  layers::PReluLayer<T> in_act, down_act;
  DilatedDense<T> dense;
  int64_t f_bins = 0, f_half = 0;

  Encoder() = default;
  Encoder(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg)
      : f_bins(cfg.f_bins()), f_half(cfg.f_half()) {
    const int64_t c = cfg.channels;
    in_conv = layers::Conv2dLayer<T>(ps, prefix + ".in_conv", 3, c, 1, 1, {},
                                     /*with_bias=*/false);
    in_norm = layers::InstanceNorm2dLayer<T>(ps, prefix + ".in_norm", c);
    in_act = layers::PReluLayer<T>(ps, prefix + ".in_act", c);
    dense = DilatedDense<T>(ps, prefix + ".dense", c, cfg.dense_depth);
    Conv2dSpec down;
    down.stride_w = 2;
    down.pad_w = 1;
    down_conv = layers::Conv2dLayer<T>(ps, prefix + ".down_conv", c, c, 1, 3, down,
                                       /*with_bias=*/false);
    down_norm = layers::InstanceNorm2dLayer<T>(ps, prefix + ".down_norm", c);
    down_act = layers::PReluLayer<T>(ps, prefix + ".down_act", c);
  }

  // packed [B,T,F,3] -> [B,C,T,Fh]
  Tensor<T> forward(const Tensor<T>& packed) const {
    check(packed.ndim() == 4 && packed.dim(3) == 3,
          "encoder: expected [B,T,F,3], got " + shape_str(packed.shape()));
    check(packed.dim(2) == f_bins,
          "encoder: input has " + std::to_string(packed.dim(2)) +
              " frequency bins but the config specifies " + std::to_string(f_bins));
    Tensor<T> x = permute(packed, {0, 3, 1, 2});  // [B,3,T,F]
    x = in_act.forward(in_norm.forward(in_conv.forward(x)));
    x = dense.forward(x);
    x = down_act.forward(down_norm.forward(down_conv.forward(x)));
    check(x.dim(3) == f_half, "encoder: frequency halving produced " +
                                  std::to_string(x.dim(3)) + " bins, expected " +
                                  std::to_string(f_half));
    return x;
  }
};

template <class T>
struct Decoder {
  DilatedDense<T> dense;
  layers::ConvTranspose2dLayer<T> up;
  layers::InstanceNorm2dLayer<T> up_norm;
  layers::PReluLayer<T> up_act;
  layers::Conv2dLayer<T> out_conv;
  layers::PReluLayer<T> mask_act;
  bool is_mask = false;
  int64_t f_bins = 0;

  Decoder() = default;
  Decoder(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg,
          bool mask_head)
      : is_mask(mask_head), f_bins(cfg.f_bins()) {
    const int64_t c = cfg.channels;
    dense = DilatedDense<T>(ps, prefix + ".dense", c, cfg.dense_depth);
    up = layers::ConvTranspose2dLayer<T>(ps, prefix + ".up", c, c, 1, 3, 1, 2, 0, 1,
                                         /*with_bias=*/false);
    up_norm = layers::InstanceNorm2dLayer<T>(ps, prefix + ".up_norm", c);
    up_act = layers::PReluLayer<T>(ps, prefix + ".up_act", c);
    out_conv = layers::Conv2dLayer<T>(ps, prefix + ".out_conv", c, mask_head ? 1 : 2, 1, 1);
    if (mask_head) mask_act = layers::PReluLayer<T>(ps, prefix + ".mask_act", 1);
  }

  // [B,C,T,Fh] -> [B,out_channels,T,F]
  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = dense.forward(x);
    h = up.forward(h);
    check(h.dim(3) == f_bins, "decoder: up-sampled width " + std::to_string(h.dim(3)) +
                                  " does not match F=" + std::to_string(f_bins));
    h = up_act.forward(up_norm.forward(h));
    h = out_conv.forward(h);
    if (is_mask) h = prelu(h, mask_act.slope, 1);
    return h;
  }
};

template <class T>
struct DecoderOutputs {
  Tensor<T> mask;      // [B,T,F]
  Tensor<T> complex_;  // [B,T,F,2]
};

// ---------------------------------------------------------------------------
// full model
// ---------------------------------------------------------------------------

template <class T>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    encoder_ = Encoder<T>(params_, "encoder", cfg_);
    for (int64_t i = 0; i < cfg_.num_blocks; ++i)
      blocks_.push_back(std::make_unique<CadbBlock<T>>(params_, "block" + std::to_string(i), cfg_));
    mask_decoder_ = Decoder<T>(params_, "mask_decoder", cfg_, true);
    complex_decoder_ = Decoder<T>(params_, "complex_decoder", cfg_, false);
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  Encoder<T>& encoder() { return encoder_; }
  std::vector<std::unique_ptr<CadbBlock<T>>>& blocks() { return blocks_; }
  Decoder<T>& mask_decoder() { return mask_decoder_; }
  Decoder<T>& complex_decoder() { return complex_decoder_; }

  void init_parameters(uint64_t seed) { params_.initialize(seed); }

  DecoderOutputs<T> decoders_forward(const Tensor<T>& x) {
    DecoderOutputs<T> out;
    Tensor<T> m = mask_decoder_.forward(x);  // [B,1,T,F]
    out.mask = reshape(m, {m.dim(0), m.dim(2), m.dim(3)});
    Tensor<T> c = complex_decoder_.forward(x);  // [B,2,T,F]
    out.complex_ = permute(c, {0, 2, 3, 1});
    return out;
  }

  // Eq.-style reconstruction: the mask scales the compressed input magnitude,
  // the complex head adds a correction, then decompress and synthesize.
  Tensor<T> reconstruct(const Tensor<T>& mask, const Tensor<T>& complex_planes,
                        const NetworkInput<T>& ni) const {
    check(mask.shape() == ni.magnitude.shape(),
          "reconstruct: mask " + shape_str(mask.shape()) + " does not match magnitude " +
              shape_str(ni.magnitude.shape()));
    check(complex_planes.ndim() == 4 && complex_planes.dim(3) == 2,
          "reconstruct: complex planes must be [B,T,F,2], got " +
              shape_str(complex_planes.shape()));
    const int64_t B = mask.dim(0), Tn = mask.dim(1), F = mask.dim(2);
    check(complex_planes.dim(0) == B && complex_planes.dim(1) == Tn &&
              complex_planes.dim(2) == F,
          "reconstruct: complex planes " + shape_str(complex_planes.shape()) +
              " do not match mask " + shape_str(mask.shape()));
    Tensor<T> masked_mag = mul(mask, ni.magnitude);
    Tensor<T> cos_p = map_constant(ni.phase, [](T v) { return std::cos(v); });
    Tensor<T> sin_p = map_constant(ni.phase, [](T v) { return std::sin(v); });
    Tensor<T> cr = reshape(slice(complex_planes, 3, 0, 1), {B, Tn, F});
    Tensor<T> ci = reshape(slice(complex_planes, 3, 1, 1), {B, Tn, F});
    Tensor<T> y_r = add(cr, mul(masked_mag, cos_p));
    Tensor<T> y_i = add(ci, mul(masked_mag, sin_p));
    const T p = T(1) / static_cast<T>(cfg_.compression) - T(1);
    auto decompressed = complex_pow_scale(y_r, y_i, p);
    return istft(decompressed.first, decompressed.second, ni.config, ni.original_length);
  }

  Tensor<T> forward_packed(const NetworkInput<T>& ni) {
    Tensor<T> x = encoder_.forward(ni.packed);
    for (auto& block : blocks_) x = block->forward(x);
    DecoderOutputs<T> dec = decoders_forward(x);
    return reconstruct(dec.mask, dec.complex_, ni);
  }

  // waveform [B,L] -> enhanced [B,L]
  Tensor<T> forward(const Tensor<T>& waveform) {
    check(waveform.ndim() == 2, "model: expected [B,L] waveform, got " +
                                    shape_str(waveform.shape()));
    const int64_t B = waveform.dim(0), L = waveform.dim(1);
    std::vector<ComplexSpectrogram<T>> specs;
    specs.reserve(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) {
      Tensor<T> row({L}, std::vector<T>(waveform.data() + b * L,
                                        waveform.data() + (b + 1) * L));
      specs.push_back(stft(row, cfg_.stft));
    }
    NetworkInput<T> ni = pack_input(specs, static_cast<T>(cfg_.compression));
    return forward_packed(ni);
  }

 private:
  ModelConfig cfg_;
  ParameterSet<T> params_;
  Encoder<T> encoder_;
  std::vector<std::unique_ptr<CadbBlock<T>>> blocks_;
  Decoder<T> mask_decoder_;
  Decoder<T> complex_decoder_;
};

// ---------------------------------------------------------------------------
// parameter accounting
// ---------------------------------------------------------------------------

struct ParameterCount {
  int64_t total = 0;
  std::vector<std::pair<std::string, int64_t>> per_module;  // by name prefix
};

inline ParameterCount count_parameters(const ModelConfig& cfg) {
  Model<float> model(cfg);
  ParameterCount pc;
  std::vector<std::string> order;
  std::map<std::string, int64_t> grouped;
  for (const auto& item : model.parameters().items()) {
    const auto dotpos = item.name.find('.');
    const std::string module = item.name.substr(0, dotpos);
    if (grouped.find(module) == grouped.end()) order.push_back(module);
    grouped[module] += item.tensor.numel();
    pc.total += item.tensor.numel();
  }
  for (const auto& m : order) pc.per_module.emplace_back(m, grouped[m]);
  return pc;
}

}  // namespace cadb
