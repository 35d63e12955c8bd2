// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Scale-invariant BSS metrics (SI-SDR / SI-SIR / SI-SAR) via whole-signal
// orthogonal projections, multi-scale STFT distance, and MSE. Ratios with a
// zero denominator are reported as a +inf sentinel, never capped; aggregation
// helpers skip sentinels and count them.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "compodiff/fft.hpp"
#include "compodiff/tensor.hpp"

namespace compodiff {

struct SeparationScores {
  double si_sdr = 0.0;
  double si_sir = 0.0;
  double si_sar = 0.0;
};

struct SiComponents {
  std::vector<double> e_target;
  std::vector<double> e_interf;
  std::vector<double> e_artif;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double energy(std::span<const double> a) { return dot(a, a); }

// solve G c = rhs by Cholesky; failure at row k means reference k is a
// linear combination of references 0..k-1
inline std::vector<double> solve_gram(std::vector<std::vector<double>> G,
                                      std::vector<double> rhs) {
  const std::size_t n = G.size();
  std::vector<std::vector<double>> L(n, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    double d = G[k][k];
    for (std::size_t j = 0; j < k; ++j) d -= L[k][j] * L[k][j];
    if (!(d > 1e-12 * std::max(G[k][k], 1e-300)))
      throw std::invalid_argument("si_decompose: reference " + std::to_string(k) +
                                  " is linearly dependent on the others");
    L[k][k] = std::sqrt(d);
    for (std::size_t i = k + 1; i < n; ++i) {
      double s = G[i][k];
      for (std::size_t j = 0; j < k; ++j) s -= L[i][j] * L[k][j];
      L[i][k] = s / L[k][k];
    }
  }
  // forward then backward substitution
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[i];
    for (std::size_t j = 0; j < i; ++j) s -= L[i][j] * y[j];
    y[i] = s / L[i][i];
  }
  std::vector<double> c(n, 0.0);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t j = ii + 1; j < n; ++j) s -= L[j][ii] * c[j];
    c[ii] = s / L[ii][ii];
  }
  return c;
}

}  // namespace detail

// Orthogonal decomposition of an estimate against a reference set:
// e_target lies on the target reference, e_interf on the rest of the
// reference span, e_artif outside the span; the three are pairwise
// orthogonal and their energies sum to the estimate's.
inline SiComponents si_decompose(std::span<const double> estimate, int target_index,
                                 const std::vector<std::vector<double>>& references) {
  const std::size_t n = estimate.size();
  if (references.empty()) throw std::invalid_argument("si_decompose: no references");
  if (target_index < 0 || target_index >= static_cast<int>(references.size()))
    throw std::invalid_argument("si_decompose: target index " + std::to_string(target_index) +
                                " out of range");
  for (std::size_t k = 0; k < references.size(); ++k)
    if (references[k].size() != n)
      throw std::invalid_argument("si_decompose: reference " + std::to_string(k) +
                                  " length mismatch");
  const std::size_t m = references.size();
  std::vector<std::vector<double>> G(m, std::vector<double>(m, 0.0));
  std::vector<double> rhs(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      G[i][j] = detail::dot(references[i], references[j]);
      G[j][i] = G[i][j];
    }
    rhs[i] = detail::dot(estimate, references[i]);
  }
  const std::vector<double> c = detail::solve_gram(G, rhs);

  const auto& target = references[static_cast<std::size_t>(target_index)];
  const double target_e = G[static_cast<std::size_t>(target_index)][static_cast<std::size_t>(target_index)];
  if (!(target_e > 0.0))
    throw std::invalid_argument("si_decompose: target reference has zero energy");
  const double ct = rhs[static_cast<std::size_t>(target_index)] / target_e;

  SiComponents out;
  out.e_target.resize(n);
  out.e_interf.resize(n);
  out.e_artif.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double proj = 0.0;
    for (std::size_t k = 0; k < m; ++k) proj += c[k] * references[k][i];
    const double et = ct * target[i];
    out.e_target[i] = et;
    out.e_interf[i] = proj - et;
    out.e_artif[i] = estimate[i] - proj;
  }
  return out;
}

// A denominator at (or within roundoff of) zero yields the +inf sentinel.
// The floor is relative to the estimate's energy: component energies below
// 1e-20 of it are double-precision residue, not signal.
inline double ratio_db(double num, double den, double zero_floor) {
  if (den <= zero_floor) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(num / den);
}

inline SeparationScores si_scores(std::span<const double> estimate, int target_index,
                                  const std::vector<std::vector<double>>& references) {
  const double est_energy = detail::energy(estimate);
  if (!(est_energy > 0.0))
    throw std::invalid_argument("si_scores: estimate has zero energy");
  SiComponents comp = si_decompose(estimate, target_index, references);
  const double et = detail::energy(comp.e_target);
  const double ei = detail::energy(comp.e_interf);
  const double ea = detail::energy(comp.e_artif);
  const double floor = est_energy * 1e-20;
  SeparationScores s;
  s.si_sdr = ratio_db(et, ei + ea, floor);
  s.si_sir = ratio_db(et, ei, floor);
  s.si_sar = ratio_db(et + ei, ea, floor);
  return s;
}

// Exhaustive assignment search maximizing mean SI-SDR. Guarded at N <= 8.
inline std::pair<std::vector<int>, std::vector<SeparationScores>> permute_and_score(
    const std::vector<std::vector<double>>& estimates,
    const std::vector<std::vector<double>>& references) {
  if (estimates.size() != references.size())
    throw std::invalid_argument("permute_and_score: " + std::to_string(estimates.size()) +
                                " estimates vs " + std::to_string(references.size()) +
                                " references");
  const int n = static_cast<int>(estimates.size());
  if (n > 8)
    throw std::invalid_argument("permute_and_score: N=" + std::to_string(n) +
                                " exceeds the factorial guard (8)");
  // score[e][r] for estimate e assigned to reference r
  std::vector<std::vector<SeparationScores>> table(static_cast<std::size_t>(n),
                                                   std::vector<SeparationScores>(static_cast<std::size_t>(n)));
  for (int e = 0; e < n; ++e)
    for (int r = 0; r < n; ++r)
      table[static_cast<std::size_t>(e)][static_cast<std::size_t>(r)] =
          si_scores(estimates[static_cast<std::size_t>(e)], r, references);
  // maximize mean SI-SDR; +inf entries (perfect matches) compare by count
  // first so ties between sentinel-carrying assignments resolve sensibly
  auto key_of = [&](const std::vector<int>& p) {
    int infs = 0;
    double finite_sum = 0.0;
    for (int e = 0; e < n; ++e) {
      const double v =
          table[static_cast<std::size_t>(e)][static_cast<std::size_t>(p[static_cast<std::size_t>(e)])].si_sdr;
      if (std::isinf(v) && v > 0) ++infs;
      else finite_sum += v;
    }
    return std::pair<int, double>(infs, finite_sum);
  };
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  auto best_key = key_of(perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const auto key = key_of(perm);
    if (key > best_key) {
      best_key = key;
      best = perm;
    }
  }
  std::vector<SeparationScores> scores(static_cast<std::size_t>(n));
  for (int e = 0; e < n; ++e)
    scores[static_cast<std::size_t>(e)] =
        table[static_cast<std::size_t>(e)][static_cast<std::size_t>(best[static_cast<std::size_t>(e)])];
  return {best, scores};
}

// ---------------------------------------------------------------------------
// multi-scale STFT distance

struct STFTConfig {
  std::vector<int> window_sizes{2048, 1024, 512, 256, 128};
  double hop_fraction = 0.25;  // hop = window * fraction
  double log_floor = 1e-7;

  // paper-scale set when the signal is long enough, desk-scale set otherwise
  static STFTConfig for_length(int length) {
    STFTConfig c;
    if (length < 2048) c.window_sizes = {64, 32, 16};
    std::erase_if(c.window_sizes, [&](int w) { return w > length; });
    if (c.window_sizes.empty())
      throw std::invalid_argument("STFTConfig: signal length " + std::to_string(length) +
                                  " shorter than every window");
    return c;
  }

  void validate(int signal_length) const {
    if (window_sizes.empty()) throw std::invalid_argument("STFTConfig: no window sizes");
    for (std::size_t i = 0; i < window_sizes.size(); ++i) {
      if (window_sizes[i] <= 0) throw std::invalid_argument("STFTConfig: non-positive window");
      if (i > 0 && window_sizes[i] >= window_sizes[i - 1])
        throw std::invalid_argument("STFTConfig: window sizes must be strictly decreasing");
      if (window_sizes[i] > signal_length)
        throw std::invalid_argument("ms_stft: window " + std::to_string(window_sizes[i]) +
                                    " exceeds signal length " + std::to_string(signal_length));
    }
  }
};

namespace detail {

// Hann-windowed magnitude frames at one scale; frames x bins, row-major
inline std::vector<double> stft_magnitudes(std::span<const double> x, int window, int hop,
                                           int* out_frames) {
  const int len = static_cast<int>(x.size());
  const int bins = window / 2 + 1;
  std::vector<double> win(static_cast<std::size_t>(window));
  for (int i = 0; i < window; ++i)
    win[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(6.283185307179586 * i / window));
  std::vector<double> mags;
  int frames = 0;
  std::vector<double> buf(static_cast<std::size_t>(window));
  for (int off = 0; off + window <= len; off += hop, ++frames) {
    for (int i = 0; i < window; ++i)
      buf[static_cast<std::size_t>(i)] =
          x[static_cast<std::size_t>(off + i)] * win[static_cast<std::size_t>(i)];
    auto spec = dft(buf);
    for (int k = 0; k < bins; ++k) mags.push_back(std::abs(spec[static_cast<std::size_t>(k)]));
  }
  *out_frames = frames;
  return mags;
}

}  // namespace detail

// sum over scales of spectral convergence + L1 log-magnitude distance;
// normalization uses `a`'s spectrogram, so the function is not symmetric
inline double ms_stft_distance(std::span<const double> a, std::span<const double> b,
                               const STFTConfig& config) {
  if (a.size() != b.size())
    throw std::invalid_argument("ms_stft: length mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  config.validate(static_cast<int>(a.size()));
  double total = 0.0;
  for (int window : config.window_sizes) {
    const int hop = std::max(1, static_cast<int>(window * config.hop_fraction));
    int frames_a = 0, frames_b = 0;
    const auto ma = detail::stft_magnitudes(a, window, hop, &frames_a);
    const auto mb = detail::stft_magnitudes(b, window, hop, &frames_b);
    double num = 0.0, den = 0.0, l1 = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
      const double d = ma[i] - mb[i];
      num += d * d;
      den += ma[i] * ma[i];
      l1 += std::abs(std::log(std::max(ma[i], config.log_floor)) -
                     std::log(std::max(mb[i], config.log_floor)));
    }
    const double sc = std::sqrt(num) / std::max(std::sqrt(den), 1e-15);
    total += sc + l1 / static_cast<double>(ma.size());
  }
  return total;
}

inline double mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("mse: length mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

inline double mse(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mse", a, b);
  return mse(a.data(), b.data());
}

// mean/std over finite entries plus the sentinel count
struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
  int finite = 0;
  int sentinels = 0;
};

inline Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  double sum = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++a.finite;
    } else {
      ++a.sentinels;
    }
  }
  if (a.finite > 0) {
    a.mean = sum / a.finite;
    double ss = 0.0;
    for (double v : values)
      if (std::isfinite(v)) ss += (v - a.mean) * (v - a.mean);
    a.stddev = a.finite > 1 ? std::sqrt(ss / (a.finite - 1)) : 0.0;
  }
  return a;
}

inline std::vector<double> flatten(const Tensor& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

}  // namespace compodiff
