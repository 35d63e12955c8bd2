// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Compositional decomposition model: a semantic encoder produces N latents
// per input, one parameter-shared conditional denoiser decodes each latent,
// and a fixed elementwise operator recomposes the N branch outputs. Training
// the reconstruction objective end-to-end makes the per-latent decodes act
// as unsupervised source estimates.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "compodiff/diffusion.hpp"
#include "compodiff/nn.hpp"
#include "compodiff/optim.hpp"
#include "compodiff/rng.hpp"
#include "compodiff/tensor.hpp"

namespace compodiff {

// N per-source latents, each [1 x latent_len]
using LatentStack = std::vector<Tensor>;

inline Tensor stack_matrix(const LatentStack& stack) {
  if (stack.empty()) throw std::invalid_argument("stack_matrix: empty latent stack");
  return concat_rows(stack);
}

inline LatentStack split_stack(const Tensor& matrix) {
  check_2d("split_stack", matrix);
  LatentStack out;
  out.reserve(static_cast<std::size_t>(matrix.dim(0)));
  for (int i = 0; i < matrix.dim(0); ++i) out.push_back(slice_rows(matrix, i, i + 1));
  return out;
}

enum class CompositionOperator { kSum, kMean, kMin, kMax };

inline const char* to_string(CompositionOperator op) {
  switch (op) {
    case CompositionOperator::kSum: return "sum";
    case CompositionOperator::kMean: return "mean";
    case CompositionOperator::kMin: return "min";
    case CompositionOperator::kMax: return "max";
  }
  return "?";
}

inline CompositionOperator composition_operator_from(const std::string& s) {
  if (s == "sum") return CompositionOperator::kSum;
  if (s == "mean") return CompositionOperator::kMean;
  if (s == "min") return CompositionOperator::kMin;
  if (s == "max") return CompositionOperator::kMax;
  throw std::invalid_argument("unknown composition operator '" + s + "'");
}

// Elementwise composition of N same-shaped parts. Sum and mean reduce in
// value-sorted order so the result is exactly permutation-invariant.
inline Tensor compose(CompositionOperator op, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("compose: empty parts list");
  const std::size_t n = parts.size();
  for (std::size_t i = 1; i < n; ++i) detail::check_same_shape("compose", parts[0], parts[i]);
  const std::int64_t m = parts[0].size();
  std::vector<double> v(static_cast<std::size_t>(m));
  std::vector<double> scratch(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < n; ++p) scratch[p] = parts[p].at(i);
    double out;
    switch (op) {
      case CompositionOperator::kSum:
      case CompositionOperator::kMean: {
        std::sort(scratch.begin(), scratch.end());
        double acc = 0.0;
        for (double x : scratch) acc += x;
        out = (op == CompositionOperator::kMean) ? acc * inv_n : acc;
        break;
      }
      case CompositionOperator::kMin:
        out = *std::min_element(scratch.begin(), scratch.end());
        break;
      case CompositionOperator::kMax:
      default:
        out = *std::max_element(scratch.begin(), scratch.end());
        break;
    }
    v[static_cast<std::size_t>(i)] = out;
  }
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  impls.reserve(n);
  for (const Tensor& p : parts) impls.push_back(p.impl());
  return make_op(
      "compose", parts[0].shape(), std::move(v), parts,
      [impls, op, inv_n](detail::TensorImpl& self) {
        const std::size_t n_parts = impls.size();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double g = self.grad[i];
          if (g == 0.0) continue;
          switch (op) {
            case CompositionOperator::kSum:
            case CompositionOperator::kMean: {
              const double gp = (op == CompositionOperator::kMean) ? g * inv_n : g;
              for (auto& pi : impls)
                if (pi->needs_grad()) {
                  pi->ensure_grad();
                  pi->grad[i] += gp;
                }
              break;
            }
            case CompositionOperator::kMin:
            case CompositionOperator::kMax: {
              // subgradient: first part attaining the extremum
              std::size_t best = 0;
              for (std::size_t p = 1; p < n_parts; ++p) {
                const double a = impls[p]->value[i], b = impls[best]->value[i];
                if (op == CompositionOperator::kMin ? a < b : a > b) best = p;
              }
              if (impls[best]->needs_grad()) {
                impls[best]->ensure_grad();
                impls[best]->grad[i] += g;
              }
              break;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// semantic encoder

struct EncoderConfig {
  int in_channels = 4;
  int length = 128;       // must be divisible by 8
  int n_latents = 2;
  int latent_len = 64;
  int base_channels = 16;
  int groups = 4;
};

// convolutional downsampling stack with a two-layer head emitting N rows
struct SemanticEncoder {
  EncoderConfig cfg;
  Conv1dLayer c1, c2, c3;
  GroupNormLayer g1, g2, g3;
  AffineLayer head_pre, head;

  SemanticEncoder() = default;
  SemanticEncoder(const EncoderConfig& cfg_, Rng& rng) : cfg(cfg_) {
    if (cfg.length % 8 != 0)
      throw std::invalid_argument("SemanticEncoder: length must be divisible by 8");
    const int B = cfg.base_channels;
    c1 = Conv1dLayer(cfg.in_channels, B, 3, 2, 1, rng);
    g1 = GroupNormLayer(B, cfg.groups);
    c2 = Conv1dLayer(B, 2 * B, 3, 2, 1, rng);
    g2 = GroupNormLayer(2 * B, cfg.groups);
    c3 = Conv1dLayer(2 * B, 2 * B, 3, 2, 1, rng);
    g3 = GroupNormLayer(2 * B, cfg.groups);
    const int feat = 2 * B * (cfg.length / 8);
    head_pre = AffineLayer(feat, feat / 2, rng);
    head = AffineLayer(feat / 2, cfg.n_latents * cfg.latent_len, rng);
  }

  // returns the [N x latent_len] latent matrix
  Tensor forward_matrix(const Tensor& x) const {
    if (x.ndim() != 2 || x.dim(0) != cfg.in_channels || x.dim(1) != cfg.length)
      throw std::invalid_argument("encode: input " + shape_str(x.shape()) + " != configured [" +
                                  std::to_string(cfg.in_channels) + "x" +
                                  std::to_string(cfg.length) + "]");
    Tensor h = silu(g1.forward(c1.forward(x)));
    h = silu(g2.forward(c2.forward(h)));
    h = silu(g3.forward(c3.forward(h)));
    Tensor flat = reshape(h, {1, 2 * cfg.base_channels * (cfg.length / 8)});
    return reshape(head.forward(silu(head_pre.forward(flat))),
                   {cfg.n_latents, cfg.latent_len});
  }

  void params(const std::string& p, NamedParams& out) const {
    c1.params(p + ".c1", out);
    g1.params(p + ".g1", out);
    c2.params(p + ".c2", out);
    g2.params(p + ".g2", out);
    c3.params(p + ".c3", out);
    g3.params(p + ".g3", out);
    head_pre.params(p + ".head_pre", out);
    head.params(p + ".head", out);
  }
};

// ---------------------------------------------------------------------------
// decomposition model

struct DecompositionConfig {
  int channels = 4;
  int length = 128;
  int n_latents = 2;
  int latent_len = 64;
  int enc_base = 16;
  int unet_base = 16;
  int emb_dim = 64;
  int pe_frequencies = 64;
  int groups = 4;
  bool attention = false;
  CompositionOperator op = CompositionOperator::kMean;
  std::uint64_t seed = 7;
};

struct DecompositionModel {
  DecompositionConfig cfg;
  SemanticEncoder encoder;
  std::shared_ptr<UNetDenoiser> denoiser;  // one parameter set for all N latents

  DecompositionModel() = default;
  explicit DecompositionModel(const DecompositionConfig& cfg_) : cfg(cfg_) {
    Rng rng(cfg.seed);
    EncoderConfig ec;
    ec.in_channels = cfg.channels;
    ec.length = cfg.length;
    ec.n_latents = cfg.n_latents;
    ec.latent_len = cfg.latent_len;
    ec.base_channels = cfg.enc_base;
    ec.groups = cfg.groups;
    encoder = SemanticEncoder(ec, rng);
    UNetConfig uc;
    uc.base_channels = cfg.unet_base;
    uc.emb_dim = cfg.emb_dim;
    uc.pe_frequencies = cfg.pe_frequencies;
    uc.groups = cfg.groups;
    uc.attention = cfg.attention;
    denoiser = std::make_shared<UNetDenoiser>(cfg.channels, /*cond_channels=*/1, uc, rng);
  }

  void params(NamedParams& out) const {
    encoder.params("enc", out);
    denoiser->params("den", out);
  }

  NamedParams params() const {
    NamedParams out;
    params(out);
    return out;
  }
};

inline LatentStack encode(const DecompositionModel& model, const Tensor& x) {
  return split_stack(model.encoder.forward_matrix(x));
}

// Reconstruction objective: one shared (x_alpha, alpha) drawn per call, the
// shared denoiser run once per latent, branch outputs composed and compared
// against x. Draw order: alpha, then x0.
inline Tensor decomposition_loss_parts(const Denoiser& denoiser, CompositionOperator op,
                                       const LatentStack& z, const Tensor& x, Rng& rng) {
  const double alpha = rng.uniform();
  Tensor x0 = Tensor::randn(x.shape(), rng);
  Tensor x_alpha = iadb_blend(x0, x, alpha);
  std::vector<Tensor> parts;
  parts.reserve(z.size());
  for (const Tensor& zi : z) parts.push_back(denoiser.forward(x_alpha, alpha, &zi));
  Tensor composed = compose(op, parts);
  return sum_squared_error(composed, x);
}

inline Tensor decomposition_loss(const DecompositionModel& model, const Tensor& x, Rng& rng) {
  LatentStack z = encode(model, x);
  return decomposition_loss_parts(*model.denoiser, model.cfg.op, z, x, rng);
}

struct TrainConfig {
  int epochs = 50;
  double lr = 1e-4;
  int batch = 8;
  std::uint64_t seed = 3;
  double weight_decay = 0.01;
};

namespace detail {

template <class LossFn>
std::vector<double> train_loop(std::vector<Tensor> params, std::size_t dataset_size,
                               const TrainConfig& cfg, LossFn&& sample_loss) {
  if (dataset_size == 0) throw std::invalid_argument("train: dataset is empty");
  AdamWConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.weight_decay = cfg.weight_decay;
  AdamW opt(std::move(params), ocfg);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) order[i] = i;
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates reshuffle each epoch
    for (std::size_t i = dataset_size; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < dataset_size;) {
      const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch),
                                                     dataset_size - at);
      opt.zero_grad();
      Tensor batch_loss;
      bool first = true;
      for (std::size_t b = 0; b < take; ++b, ++at) {
        Tensor l = sample_loss(order[at], rng);
        batch_loss = first ? l : add(batch_loss, l);
        first = false;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(take));
      const double lv = batch_loss.item();
      if (!std::isfinite(lv))
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch + 1) + ", batch " +
                                 std::to_string(batches + 1));
      batch_loss.backward();
      opt.step();
      epoch_loss += lv;
      ++batches;
    }
    trace.push_back(epoch_loss / static_cast<double>(batches));
  }
  return trace;
}

}  // namespace detail

// returns the per-epoch loss trace; the model is trained in place
inline std::vector<double> train_decomposition(DecompositionModel& model,
                                               const std::vector<Tensor>& dataset,
                                               const TrainConfig& cfg) {
  return detail::train_loop(values_of(model.params()), dataset.size(), cfg,
                            [&](std::size_t idx, Rng& rng) {
                              return decomposition_loss(model, dataset[idx], rng);
                            });
}

// decode one latent back to data space; one separated source estimate
inline Tensor decode_component(const DecompositionModel& model, const Tensor& z_i,
                               const Tensor& x0, int steps) {
  SamplerConfig sc;
  sc.steps = steps;
  return iadb_sample(*model.denoiser, x0, sc, &z_i);
}

// Encode x, draw ONE shared base sample, decode every latent from it.
inline std::vector<Tensor> separate(const DecompositionModel& model, const Tensor& x, int steps,
                                    std::uint64_t seed) {
  NoGradGuard ng;
  LatentStack z = encode(model, x);
  Rng rng(seed);
  Tensor x0 = Tensor::randn(x.shape(), rng);
  std::vector<Tensor> estimates;
  estimates.reserve(z.size());
  for (const Tensor& zi : z) estimates.push_back(decode_component(model, zi, x0, steps));
  return estimates;
}

inline Tensor reconstruct(const DecompositionModel& model, const Tensor& x, int steps,
                          std::uint64_t seed) {
  return compose(model.cfg.op, separate(model, x, steps, seed));
}

}  // namespace compodiff
