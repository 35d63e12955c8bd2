// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Noise schedules, the DDPM noise-prediction reference objective, and the
// alpha-blending formulation (blend, data-prediction loss, deterministic
// sampler) that the decomposition and prior models train with.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "compodiff/nn.hpp"
#include "compodiff/rng.hpp"
#include "compodiff/tensor.hpp"

namespace compodiff {

// beta/alpha/alpha_bar sequences for the DDPM reference mode
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  explicit NoiseSchedule(std::vector<double> betas_) : betas(std::move(betas_)) {
    if (betas.empty()) throw std::invalid_argument("NoiseSchedule: empty beta sequence");
    alphas.resize(betas.size());
    alpha_bars.resize(betas.size());
    double prod = 1.0;
    double prev_beta = 0.0;
    for (std::size_t t = 0; t < betas.size(); ++t) {
      const double b = betas[t];
      if (!(b > 0.0 && b < 1.0))
        throw std::invalid_argument("NoiseSchedule: beta[" + std::to_string(t + 1) +
                                    "] out of (0,1)");
      if (b < prev_beta)
        throw std::invalid_argument("NoiseSchedule: beta sequence decreases at t=" +
                                    std::to_string(t + 1));
      prev_beta = b;
      alphas[t] = 1.0 - b;
      prod *= alphas[t];
      alpha_bars[t] = prod;
    }
  }

  static NoiseSchedule linear(int T = 1000, double beta_lo = 1e-4, double beta_hi = 0.02) {
    std::vector<double> b(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
      b[static_cast<std::size_t>(t)] =
          T > 1 ? beta_lo + (beta_hi - beta_lo) * t / (T - 1) : beta_lo;
    return NoiseSchedule(std::move(b));
  }

  int T() const { return static_cast<int>(betas.size()); }
};

struct SamplerConfig {
  int steps = 100;          // alpha grid is uniform on [0,1] with steps+1 points
  std::uint64_t seed = 0;   // used by callers that draw the initial sample
};

// A parameterized map (x_alpha, alpha, optional condition) -> tensor of the
// same shape as x_alpha.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor forward(const Tensor& x_alpha, double alpha, const Tensor* condition) const = 0;
  virtual void params(const std::string& prefix, NamedParams& out) const { (void)prefix, (void)out; }
};

// test/oracle adapter
class FunctionalDenoiser : public Denoiser {
 public:
  using Fn = std::function<Tensor(const Tensor&, double, const Tensor*)>;
  explicit FunctionalDenoiser(Fn fn) : fn_(std::move(fn)) {}
  Tensor forward(const Tensor& x_alpha, double alpha, const Tensor* condition) const override {
    return fn_(x_alpha, alpha, condition);
  }

 private:
  Fn fn_;
};

// U-Net denoiser; an optional condition is length-matched by nearest-neighbour
// repetition and concatenated as extra input channels.
class UNetDenoiser : public Denoiser {
 public:
  UNetDenoiser() = default;
  UNetDenoiser(int data_channels, int cond_channels, UNetConfig cfg, Rng& rng)
      : data_channels_(data_channels), cond_channels_(cond_channels) {
    cfg.in_channels = data_channels + cond_channels;
    cfg.out_channels = data_channels;
    net_ = UNet1d(cfg, rng);
  }

  Tensor forward(const Tensor& x_alpha, double alpha, const Tensor* condition) const override {
    if (cond_channels_ == 0) {
      if (condition != nullptr)
        throw std::invalid_argument("denoiser: unexpected condition on unconditional model");
      return net_.forward(x_alpha, alpha);
    }
    if (condition == nullptr) throw std::invalid_argument("denoiser: condition required");
    if (condition->dim(0) != cond_channels_)
      throw std::invalid_argument("denoiser: condition channels " +
                                  std::to_string(condition->dim(0)) + " != configured " +
                                  std::to_string(cond_channels_));
    Tensor cond_rows = condition->dim(1) == x_alpha.dim(1)
                           ? *condition
                           : repeat_cols(*condition, x_alpha.dim(1));
    return net_.forward(concat_rows(x_alpha, cond_rows), alpha);
  }

  void params(const std::string& prefix, NamedParams& out) const override {
    net_.params(prefix, out);
  }

  int data_channels() const { return data_channels_; }
  int cond_channels() const { return cond_channels_; }
  const UNet1d& net() const { return net_; }

 private:
  int data_channels_ = 0;
  int cond_channels_ = 0;
  UNet1d net_;
};

// ---------------------------------------------------------------------------
// DDPM reference mode

// closed-form marginal sample sqrt(abar_t) x0 + sqrt(1-abar_t) eps, t in 1..T
inline Tensor ddpm_forward(const Tensor& x0, int t, const Tensor& eps,
                           const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.T())
    throw std::invalid_argument("ddpm_forward: t=" + std::to_string(t) + " out of [1," +
                                std::to_string(schedule.T()) + "]");
  detail::check_same_shape("ddpm_forward", x0, eps);
  const double abar = schedule.alpha_bars[static_cast<std::size_t>(t - 1)];
  return add(scale(x0, std::sqrt(abar)), scale(eps, std::sqrt(1.0 - abar)));
}

// noise-prediction objective ||eps_theta(x_t, t) - eps||^2, t ~ U{1..T};
// the network sees the normalized step t/T as its level input
inline Tensor ddpm_loss(const Denoiser& denoiser, const Tensor& x0, const NoiseSchedule& schedule,
                        Rng& rng) {
  const int t = static_cast<int>(rng.uniform_int(1, schedule.T()));
  Tensor eps = Tensor::randn(x0.shape(), rng);
  Tensor xt = ddpm_forward(x0, t, eps, schedule);
  Tensor pred = denoiser.forward(xt, static_cast<double>(t) / schedule.T(), nullptr);
  return sum_squared_error(pred, eps);
}

// ---------------------------------------------------------------------------
// alpha-(de)blending

inline Tensor iadb_blend(const Tensor& x0, const Tensor& x1, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("iadb_blend: alpha=" + std::to_string(alpha) + " out of [0,1]");
  detail::check_same_shape("iadb_blend", x0, x1);
  return lerp(x0, x1, alpha);
}

// data-prediction objective ||eps_theta(x_alpha, alpha) - x||^2 with
// alpha ~ U[0,1), x0 ~ N(0,I)
inline Tensor iadb_loss(const Denoiser& denoiser, const Tensor& x1, const Tensor* condition,
                        Rng& rng) {
  const double alpha = rng.uniform();
  Tensor x0 = Tensor::randn(x1.shape(), rng);
  Tensor x_alpha = iadb_blend(x0, x1, alpha);
  Tensor pred = denoiser.forward(x_alpha, alpha, condition);
  return sum_squared_error(pred, x1);
}

// Deterministic sampler on the uniform alpha grid. At grid point alpha the
// network prediction x1hat re-anchors the blend: x0hat = (x - alpha*x1hat) /
// (1 - alpha), then x <- (1 - alpha')*x0hat + alpha'*x1hat for the next grid
// point. The division is skipped once alpha > 1 - 1e-6.
inline Tensor iadb_sample(const Denoiser& denoiser, const Tensor& x0, const SamplerConfig& config,
                          const Tensor* condition = nullptr) {
  if (config.steps < 1)
    throw std::invalid_argument("iadb_sample: steps must be >= 1, got " +
                                std::to_string(config.steps));
  NoGradGuard ng;
  Tensor x = x0;
  const int n = config.steps;
  for (int k = 0; k < n; ++k) {
    const double alpha = static_cast<double>(k) / n;
    const double alpha_next = static_cast<double>(k + 1) / n;
    Tensor x1hat = denoiser.forward(x, alpha, condition);
    if (alpha > 1.0 - 1e-6) {
      x = x1hat;
    } else {
      Tensor x0hat = scale(sub(x, scale(x1hat, alpha)), 1.0 / (1.0 - alpha));
      x = lerp(x0hat, x1hat, alpha_next);
    }
  }
  return x;
}

}  // namespace compodiff
