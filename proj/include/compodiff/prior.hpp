// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Masked diffusion prior over the latent stack. Each latent is dropped as a
// whole with probability p_mask; masked positions carry the alpha-blend,
// unmasked positions stay clean, and the network recovers the full stack
// from the masked view plus the mask itself.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "compodiff/compose.hpp"
#include "compodiff/diffusion.hpp"
#include "compodiff/rng.hpp"
#include "compodiff/tensor.hpp"

namespace compodiff {

// per-latent mask bits; 1 = noised/blended (to be recovered), 0 = kept clean
struct Mask {
  std::vector<std::uint8_t> bits;

  int n() const { return static_cast<int>(bits.size()); }

  static Mask ones(int n) { return Mask{std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1)}; }
  static Mask zeros(int n) { return Mask{std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0)}; }

  // broadcast to the [N x latent_len] stack layout
  Tensor matrix(int latent_len) const {
    std::vector<double> v(bits.size() * static_cast<std::size_t>(latent_len));
    for (std::size_t i = 0; i < bits.size(); ++i)
      for (int j = 0; j < latent_len; ++j)
        v[i * static_cast<std::size_t>(latent_len) + static_cast<std::size_t>(j)] =
            bits[i] ? 1.0 : 0.0;
    return Tensor({n(), latent_len}, std::move(v));
  }
};

// each latent masked independently with probability p_mask
inline Mask make_mask(int n, double p_mask, Rng& rng) {
  if (!(p_mask >= 0.0 && p_mask <= 1.0))
    throw std::invalid_argument("make_mask: p_mask=" + std::to_string(p_mask) + " out of [0,1]");
  Mask m;
  m.bits.resize(static_cast<std::size_t>(n));
  for (auto& b : m.bits) b = rng.bernoulli(p_mask) ? 1 : 0;
  return m;
}

// z_alpha = ((1-alpha) z0 + alpha z) on masked rows, z untouched elsewhere
inline Tensor masked_blend(const Tensor& z, const Tensor& z0, double alpha, const Mask& m) {
  check_2d("masked_blend", z);
  detail::check_same_shape("masked_blend", z, z0);
  if (m.n() != z.dim(0))
    throw std::invalid_argument("masked_blend: mask has " + std::to_string(m.n()) +
                                " bits for " + std::to_string(z.dim(0)) + " latents");
  const int N = z.dim(0), L = z.dim(1);
  const double w0 = 1.0 - alpha;
  std::vector<double> v(static_cast<std::size_t>(N) * L);
  for (int r = 0; r < N; ++r) {
    const bool on = m.bits[static_cast<std::size_t>(r)] != 0;
    for (int j = 0; j < L; ++j) {
      const std::size_t k = static_cast<std::size_t>(r) * L + j;
      v[k] = on ? w0 * z0.data()[k] + alpha * z.data()[k] : z.data()[k];
    }
  }
  auto zi = z.impl(), z0i = z0.impl();
  auto bits = m.bits;
  return make_op("masked_blend", z.shape(), std::move(v), {z, z0},
                 [zi, z0i, bits, w0, alpha, N, L](detail::TensorImpl& self) {
                   for (int r = 0; r < N; ++r) {
                     const bool on = bits[static_cast<std::size_t>(r)] != 0;
                     for (int j = 0; j < L; ++j) {
                       const std::size_t k = static_cast<std::size_t>(r) * L + j;
                       if (zi->needs_grad()) {
                         zi->ensure_grad();
                         zi->grad[k] += self.grad[k] * (on ? alpha : 1.0);
                       }
                       if (on && z0i->needs_grad()) {
                         z0i->ensure_grad();
                         z0i->grad[k] += self.grad[k] * w0;
                       }
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// prior model

struct PriorConfig {
  int n_latents = 2;
  int latent_len = 64;  // must be divisible by 4
  int base_channels = 16;
  int emb_dim = 64;
  int pe_frequencies = 64;
  int groups = 4;
  bool attention = false;
  double p_mask = 0.8;
  std::uint64_t seed = 11;
};

// denoiser over the flattened stack; the mask enters as extra input channels
struct PriorModel {
  PriorConfig cfg;
  std::shared_ptr<UNetDenoiser> denoiser;

  PriorModel() = default;
  explicit PriorModel(const PriorConfig& cfg_) : cfg(cfg_) {
    Rng rng(cfg.seed);
    UNetConfig uc;
    uc.base_channels = cfg.base_channels;
    uc.emb_dim = cfg.emb_dim;
    uc.pe_frequencies = cfg.pe_frequencies;
    uc.groups = cfg.groups;
    uc.attention = cfg.attention;
    denoiser = std::make_shared<UNetDenoiser>(cfg.n_latents, /*cond_channels=*/cfg.n_latents,
                                              uc, rng);
  }

  Tensor forward(const Tensor& z_alpha, double alpha, const Mask& m) const {
    Tensor mask_rows = m.matrix(z_alpha.dim(1));
    return denoiser->forward(z_alpha, alpha, &mask_rows);
  }

  void params(NamedParams& out) const { denoiser->params("prior", out); }

  NamedParams params() const {
    NamedParams out;
    params(out);
    return out;
  }
};

// ||z - eps_psi(z_alpha, alpha, m)||^2 over the full stack; draw order:
// alpha, z0, mask. The mask reaches the network as its condition channels.
inline Tensor prior_loss_core(const Denoiser& eps_psi, const Tensor& z, Rng& rng, double p_mask) {
  const double alpha = rng.uniform();
  Tensor z0 = Tensor::randn(z.shape(), rng);
  Mask m = make_mask(z.dim(0), p_mask, rng);
  Tensor z_alpha = masked_blend(z, z0, alpha, m);
  Tensor mask_rows = m.matrix(z.dim(1));
  Tensor pred = eps_psi.forward(z_alpha, alpha, &mask_rows);
  return sum_squared_error(pred, z);
}

inline Tensor prior_loss(const PriorModel& model, const Tensor& z, Rng& rng, double p_mask) {
  return prior_loss_core(*model.denoiser, z, rng, p_mask);
}

inline Tensor prior_loss(const PriorModel& model, const LatentStack& z, Rng& rng, double p_mask) {
  Tensor zm;
  {
    NoGradGuard ng;  // the stack is training data here, not part of the graph
    zm = stack_matrix(z);
  }
  return prior_loss(model, zm, rng, p_mask);
}

// per-epoch loss trace; latents are treated as fixed training data
inline std::vector<double> train_prior(PriorModel& model, const std::vector<Tensor>& latent_stacks,
                                       const TrainConfig& cfg) {
  return detail::train_loop(values_of(model.params()), latent_stacks.size(), cfg,
                            [&](std::size_t idx, Rng& rng) {
                              return prior_loss(model, latent_stacks[idx], rng, model.cfg.p_mask);
                            });
}

// Deterministic masked sampler. Unconditional when `known` is absent (mask
// all ones). Rows with mask bit 0 are hard-clamped to the known clean values
// after every update, so kept latents appear bit-exact in the output.
inline LatentStack generate_core(const Denoiser& eps_psi, int N, int L,
                                 const std::optional<std::pair<LatentStack, Mask>>& known,
                                 int steps, std::uint64_t seed) {
  if (steps < 1)
    throw std::invalid_argument("generate: steps must be >= 1, got " + std::to_string(steps));
  NoGradGuard ng;
  Mask m = known ? known->second : Mask::ones(N);
  if (m.n() != N)
    throw std::invalid_argument("generate: mask has " + std::to_string(m.n()) + " bits for " +
                                std::to_string(N) + " latents");
  Tensor known_matrix = known ? stack_matrix(known->first).detached_copy()
                              : Tensor::zeros({N, L});
  if (known_matrix.dim(0) != N || known_matrix.dim(1) != L)
    throw std::invalid_argument("generate: known stack shape " +
                                shape_str(known_matrix.shape()) + " != [" + std::to_string(N) +
                                "x" + std::to_string(L) + "]");
  Rng rng(seed);
  Tensor x = Tensor::randn({N, L}, rng);

  auto clamp_known = [&](const Tensor& t) {
    std::vector<double> v(t.data().begin(), t.data().end());
    for (int r = 0; r < N; ++r) {
      if (m.bits[static_cast<std::size_t>(r)] != 0) continue;
      for (int j = 0; j < L; ++j)
        v[static_cast<std::size_t>(r) * L + j] = known_matrix.at(r, j);
    }
    return Tensor({N, L}, std::move(v));
  };

  x = clamp_known(x);
  Tensor mask_rows = m.matrix(L);
  for (int k = 0; k < steps; ++k) {
    const double alpha = static_cast<double>(k) / steps;
    const double alpha_next = static_cast<double>(k + 1) / steps;
    Tensor pred = eps_psi.forward(x, alpha, &mask_rows);
    Tensor next;
    if (alpha > 1.0 - 1e-6) {
      next = pred;
    } else {
      Tensor x0hat = scale(sub(x, scale(pred, alpha)), 1.0 / (1.0 - alpha));
      next = lerp(x0hat, pred, alpha_next);
    }
    x = clamp_known(next);
  }
  return split_stack(x);
}

inline LatentStack generate(const PriorModel& model,
                            const std::optional<std::pair<LatentStack, Mask>>& known, int steps,
                            std::uint64_t seed) {
  return generate_core(*model.denoiser, model.cfg.n_latents, model.cfg.latent_len, known, steps,
                       seed);
}

}  // namespace compodiff
