// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Layers and the 1-D U-Net used by every model in the project. Weights are
// initialized uniform in +-sqrt(1/fan_in), biases zero, deterministic given
// the Rng passed to the constructor.

#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "compodiff/rng.hpp"
#include "compodiff/tensor.hpp"

namespace compodiff {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline std::vector<Tensor> values_of(const NamedParams& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

inline Tensor init_uniform(Shape shape, int fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  return Tensor::rand_uniform(std::move(shape), rng, -bound, bound, /*requires_grad=*/true);
}

struct Conv1dLayer {
  Tensor w;  // [C_out x C_in x K]
  Tensor b;  // [C_out]
  int stride = 1;
  int padding = 0;

  Conv1dLayer() = default;
  Conv1dLayer(int c_in, int c_out, int k, int stride_, int padding_, Rng& rng)
      : w(init_uniform({c_out, c_in, k}, c_in * k, rng)),
        b(Tensor::zeros({c_out}, /*requires_grad=*/true)),
        stride(stride_),
        padding(padding_) {}

  Tensor forward(const Tensor& x) const { return bias_rows(conv1d(x, w, stride, padding), b); }

  void params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

struct AffineLayer {
  Tensor w;  // [F_out x F_in]
  Tensor b;  // [F_out]

  AffineLayer() = default;
  AffineLayer(int f_in, int f_out, Rng& rng)
      : w(init_uniform({f_out, f_in}, f_in, rng)),
        b(Tensor::zeros({f_out}, /*requires_grad=*/true)) {}

  Tensor forward(const Tensor& x) const { return affine(x, w, b); }

  void params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

struct GroupNormLayer {
  int groups = 1;
  double eps = 1e-5;
  Tensor gamma;
  Tensor beta;

  GroupNormLayer() = default;
  GroupNormLayer(int channels, int groups_)
      : groups(groups_),
        gamma(Tensor::full({channels}, 1.0, /*requires_grad=*/true)),
        beta(Tensor::zeros({channels}, /*requires_grad=*/true)) {}

  Tensor forward(const Tensor& x) const { return group_norm(x, groups, gamma, beta, eps); }

  void params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
};

// Sinusoidal encoding of the blend level, 64 frequencies geometric in
// [1, 1000]; returned as a [1 x 2F] constant row.
inline Tensor alpha_encoding(double alpha, int frequencies = 64) {
  std::vector<double> v(static_cast<std::size_t>(2 * frequencies));
  const double log_hi = std::log(1000.0);
  for (int i = 0; i < frequencies; ++i) {
    const double t = frequencies > 1 ? static_cast<double>(i) / (frequencies - 1) : 0.0;
    const double omega = std::exp(t * log_hi);
    v[static_cast<std::size_t>(2 * i)] = std::sin(omega * alpha);
    v[static_cast<std::size_t>(2 * i + 1)] = std::cos(omega * alpha);
  }
  return Tensor({1, 2 * frequencies}, std::move(v));
}

// ResNet block, AdaGN conditioning on the level embedding:
// h = conv1(silu(gn1(x))); h = gn2(h)*(1+s) + t with (s,t) = proj(emb);
// h = conv2(silu(h)); out = h + skip(x).
struct ResBlock {
  int c_in = 0, c_out = 0;
  GroupNormLayer gn1, gn2;
  Conv1dLayer conv1, conv2;
  AffineLayer emb_proj;  // emb -> 2*c_out (scale, shift)
  std::optional<Conv1dLayer> skip;

  ResBlock() = default;
  ResBlock(int c_in_, int c_out_, int emb_dim, int groups, Rng& rng)
      : c_in(c_in_),
        c_out(c_out_),
        gn1(c_in_, groups),
        gn2(c_out_, groups),
        conv1(c_in_, c_out_, 3, 1, 1, rng),
        conv2(c_out_, c_out_, 3, 1, 1, rng),
        emb_proj(emb_dim, 2 * c_out_, rng) {
    if (c_in_ != c_out_) skip.emplace(c_in_, c_out_, 1, 1, 0, rng);
  }

  Tensor forward(const Tensor& x, const Tensor& emb) const {
    Tensor h = conv1.forward(silu(gn1.forward(x)));
    Tensor ss = reshape(emb_proj.forward(emb), {2 * c_out, 1});
    Tensor s = slice_rows(ss, 0, c_out);
    Tensor t = slice_rows(ss, c_out, 2 * c_out);
    h = bias_rows(scale_rows(gn2.forward(h), add_scalar(s, 1.0)), t);
    h = conv2.forward(silu(h));
    Tensor sk = skip ? skip->forward(x) : x;
    return add(h, sk);
  }

  void params(const std::string& p, NamedParams& out) const {
    gn1.params(p + ".gn1", out);
    conv1.params(p + ".conv1", out);
    emb_proj.params(p + ".emb", out);
    gn2.params(p + ".gn2", out);
    conv2.params(p + ".conv2", out);
    if (skip) skip->params(p + ".skip", out);
  }
};

// single-head dot-product attention over positions
struct SelfAttention1d {
  int channels = 0;
  GroupNormLayer norm;
  Conv1dLayer q, k, v, proj;

  SelfAttention1d() = default;
  SelfAttention1d(int channels_, int groups, Rng& rng)
      : channels(channels_),
        norm(channels_, groups),
        q(channels_, channels_, 1, 1, 0, rng),
        k(channels_, channels_, 1, 1, 0, rng),
        v(channels_, channels_, 1, 1, 0, rng),
        proj(channels_, channels_, 1, 1, 0, rng) {}

  Tensor forward(const Tensor& x) const {
    Tensor h = norm.forward(x);
    Tensor qm = q.forward(h);
    Tensor km = k.forward(h);
    Tensor vm = v.forward(h);
    Tensor scores = scale(matmul(transpose2d(qm), km), 1.0 / std::sqrt(double(channels)));
    Tensor attn = softmax_rows(scores);  // [L x L], rows are queries
    Tensor mixed = matmul(vm, transpose2d(attn));
    return add(x, proj.forward(mixed));
  }

  void params(const std::string& p, NamedParams& out) const {
    norm.params(p + ".norm", out);
    q.params(p + ".q", out);
    k.params(p + ".k", out);
    v.params(p + ".v", out);
    proj.params(p + ".proj", out);
  }
};

struct UNetConfig {
  int in_channels = 4;    // data channels plus conditioning channels
  int out_channels = 4;
  int base_channels = 16;
  int emb_dim = 64;
  int pe_frequencies = 64;
  int groups = 4;
  bool attention = false;
};

// Two-level encoder-decoder with skip connections; input length must be
// divisible by 4.
struct UNet1d {
  UNetConfig cfg;
  Conv1dLayer stem;
  ResBlock enc1, enc2, mid1, mid2, dec1, dec2;
  Conv1dLayer down1, down2, fuse1, fuse2;
  std::optional<SelfAttention1d> attn;
  AffineLayer emb_in, emb_out;
  GroupNormLayer head_norm;
  Conv1dLayer head;

  UNet1d() = default;
  explicit UNet1d(const UNetConfig& cfg_, Rng& rng) : cfg(cfg_) {
    const int B = cfg.base_channels;
    const int B2 = 2 * B;
    stem = Conv1dLayer(cfg.in_channels, B, 3, 1, 1, rng);
    enc1 = ResBlock(B, B, cfg.emb_dim, cfg.groups, rng);
    down1 = Conv1dLayer(B, B2, 3, 2, 1, rng);
    enc2 = ResBlock(B2, B2, cfg.emb_dim, cfg.groups, rng);
    down2 = Conv1dLayer(B2, B2, 3, 2, 1, rng);
    mid1 = ResBlock(B2, B2, cfg.emb_dim, cfg.groups, rng);
    if (cfg.attention) attn.emplace(B2, cfg.groups, rng);
    mid2 = ResBlock(B2, B2, cfg.emb_dim, cfg.groups, rng);
    fuse1 = Conv1dLayer(B2 + B2, B2, 3, 1, 1, rng);
    dec1 = ResBlock(B2, B2, cfg.emb_dim, cfg.groups, rng);
    fuse2 = Conv1dLayer(B2 + B, B, 3, 1, 1, rng);
    dec2 = ResBlock(B, B, cfg.emb_dim, cfg.groups, rng);
    emb_in = AffineLayer(2 * cfg.pe_frequencies, cfg.emb_dim, rng);
    emb_out = AffineLayer(cfg.emb_dim, cfg.emb_dim, rng);
    head_norm = GroupNormLayer(B, cfg.groups);
    head = Conv1dLayer(B, cfg.out_channels, 3, 1, 1, rng);
  }

  Tensor forward(const Tensor& x, double alpha) const {
    if (x.dim(0) != cfg.in_channels)
      throw std::invalid_argument("UNet1d: input channels " + std::to_string(x.dim(0)) +
                                  " != configured " + std::to_string(cfg.in_channels));
    if (x.dim(1) % 4 != 0)
      throw std::invalid_argument("UNet1d: length " + std::to_string(x.dim(1)) +
                                  " not divisible by 4");
    Tensor emb = emb_out.forward(silu(emb_in.forward(alpha_encoding(alpha, cfg.pe_frequencies))));
    Tensor h0 = stem.forward(x);
    Tensor s1 = enc1.forward(h0, emb);
    Tensor h1 = down1.forward(s1);
    Tensor s2 = enc2.forward(h1, emb);
    Tensor h2 = down2.forward(s2);
    Tensor m = mid1.forward(h2, emb);
    if (attn) m = attn->forward(m);
    m = mid2.forward(m, emb);
    Tensor u1 = fuse1.forward(concat_rows(repeat_cols(m, s2.dim(1)), s2));
    u1 = dec1.forward(u1, emb);
    Tensor u2 = fuse2.forward(concat_rows(repeat_cols(u1, s1.dim(1)), s1));
    u2 = dec2.forward(u2, emb);
    return head.forward(silu(head_norm.forward(u2)));
  }

  void params(const std::string& p, NamedParams& out) const {
    stem.params(p + ".stem", out);
    enc1.params(p + ".enc1", out);
    down1.params(p + ".down1", out);
    enc2.params(p + ".enc2", out);
    down2.params(p + ".down2", out);
    mid1.params(p + ".mid1", out);
    if (attn) attn->params(p + ".attn", out);
    mid2.params(p + ".mid2", out);
    fuse1.params(p + ".fuse1", out);
    dec1.params(p + ".dec1", out);
    fuse2.params(p + ".fuse2", out);
    dec2.params(p + ".dec2", out);
    emb_in.params(p + ".emb_in", out);
    emb_out.params(p + ".emb_out", out);
    head_norm.params(p + ".head_norm", out);
    head.params(p + ".head", out);
  }
};

}  // namespace compodiff
