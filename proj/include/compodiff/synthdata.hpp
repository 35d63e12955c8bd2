// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Deterministic synthetic two-source dataset: a harmonic "bass-like" stem and
// an impulsive "drum-like" stem, mixed with exact linearity and ground-truth
// stems retained. Frames live in R^{C x L}: channel 0 is the waveform,
// channels 1..3 are fixed band-pass copies.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "compodiff/fft.hpp"
#include "compodiff/rng.hpp"
#include "compodiff/tensor.hpp"

namespace compodiff {

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum class SourceKind { kHarmonic, kPercussive };

struct SourceParams {
  SourceKind kind = SourceKind::kHarmonic;
  // fundamental (cycles per frame) for harmonic, expected bursts per frame
  // for percussive
  double freq_lo = 2.0, freq_hi = 6.0;
  double amp_lo = 0.5, amp_hi = 1.0;
  double decay_lo = 0.0, decay_hi = 1.0;
  double cutoff = 16.0;  // harmonic partials above this bin are dropped
  std::uint64_t seed = 0;

  void validate() const {
    auto range_ok = [](double lo, double hi) { return lo >= 0.0 && hi >= lo; };
    if (!range_ok(freq_lo, freq_hi) || !range_ok(amp_lo, amp_hi) || !range_ok(decay_lo, decay_hi))
      throw std::invalid_argument("SourceParams: ranges must be non-empty and non-negative");
  }
};

// record of the values actually drawn for one stem
struct SourceDraw {
  SourceKind kind = SourceKind::kHarmonic;
  double freq = 0.0;
  double amp = 0.0;
  double decay = 0.0;
  int events = 0;  // partials or bursts
};

struct MixtureSample {
  Tensor mixture;             // [C x L]
  std::vector<Tensor> stems;  // N tensors [C x L]
  std::vector<SourceDraw> params;
  double norm_factor = 1.0;
};

// sum of 1-3 low partials under a slow exponential envelope (waveform, [L])
inline Tensor gen_harmonic(const SourceParams& params, Rng& rng, int length) {
  if (length <= 0) throw std::invalid_argument("gen_harmonic: length must be > 0");
  params.validate();
  const double f0 = rng.uniform(params.freq_lo, params.freq_hi);
  const double amp = rng.uniform(params.amp_lo, params.amp_hi);
  const double decay = rng.uniform(params.decay_lo, params.decay_hi);
  const int partials = static_cast<int>(rng.uniform_int(1, 3));
  std::vector<double> phase(3);
  for (int p = 0; p < 3; ++p) phase[static_cast<std::size_t>(p)] = rng.uniform(0.0, 6.283185307179586);
  std::vector<double> v(static_cast<std::size_t>(length), 0.0);
  for (int p = 1; p <= partials; ++p) {
    const double f = f0 * p;
    if (f > params.cutoff) break;
    const double a = amp / p;
    for (int t = 0; t < length; ++t)
      v[static_cast<std::size_t>(t)] +=
          a * std::sin(6.283185307179586 * f * t / length + phase[static_cast<std::size_t>(p - 1)]);
  }
  for (int t = 0; t < length; ++t)
    v[static_cast<std::size_t>(t)] *= std::exp(-decay * t / length);
  return Tensor({length}, std::move(v));
}

// One broadband "hit": phase-randomized noise with a flat magnitude
// spectrum, drawn once from a fixed stream, so every burst is the same
// renderable shape and a stem is fully described by its onsets, amplitudes
// and decays.
inline const std::vector<double>& burst_template() {
  static const std::vector<double> t = [] {
    constexpr int n = 32;
    Rng rng(0x6b75727au);  // fixed; the template is part of the dataset spec
    std::vector<std::complex<double>> spec(n, {0.0, 0.0});
    for (int k = 1; k < n / 2; ++k) {
      const double phase = rng.uniform(0.0, 6.283185307179586);
      spec[static_cast<std::size_t>(k)] = std::polar(1.0, phase);
      spec[static_cast<std::size_t>(n - k)] = std::conj(spec[static_cast<std::size_t>(k)]);
    }
    spec[n / 2] = rng.bernoulli(0.5) ? 1.0 : -1.0;
    fft_inplace(spec, true);
    std::vector<double> v(n);
    double peak = 0.0;
    for (int i = 0; i < n; ++i) {
      v[static_cast<std::size_t>(i)] = spec[static_cast<std::size_t>(i)].real();
      peak = std::max(peak, std::abs(v[static_cast<std::size_t>(i)]));
    }
    for (double& x : v) x /= peak;
    return v;
  }();
  return t;
}

// Onsets snap to a coarse step grid, like a drum machine; keeps hits exactly
// renderable from a block-aligned latent sketch.
inline constexpr int kOnsetGrid = 4;

// sparse train of exponentially decaying broadband bursts ([L])
inline Tensor gen_percussive(const SourceParams& params, Rng& rng, int length) {
  if (length <= 0) throw std::invalid_argument("gen_percussive: length must be > 0");
  params.validate();
  const double rate = rng.uniform(params.freq_lo, params.freq_hi);
  const double amp = rng.uniform(params.amp_lo, params.amp_hi);
  std::vector<double> v(static_cast<std::size_t>(length), 0.0);
  if (rate <= 0.0 || amp <= 0.0) return Tensor({length}, std::move(v));
  const std::vector<double>& tmpl = burst_template();
  const double gap = static_cast<double>(length) / rate;
  double onset = rng.uniform(1.0, std::max(2.0, gap));
  while (onset < length) {
    const int t0 =
        std::max(kOnsetGrid, static_cast<int>(std::lround(onset / kOnsetGrid)) * kOnsetGrid);
    if (t0 >= length) break;
    const double tau = std::max(0.5, rng.uniform(params.decay_lo, params.decay_hi));
    const double a = amp * rng.uniform(0.7, 1.0);
    for (int t = std::max(t0, 0); t < length; ++t) {
      const int k = t - t0;
      if (k >= static_cast<int>(tmpl.size())) break;
      const double env = std::exp(-k / tau);
      if (env < 1e-4) break;
      v[static_cast<std::size_t>(t)] += a * env * tmpl[static_cast<std::size_t>(k)];
    }
    onset += gap * rng.uniform(0.6, 1.4);
  }
  return Tensor({length}, std::move(v));
}

// fixed band edges (DFT bins) for the three band-pass channels
struct BandSplit {
  int low_hi = 8;    // channel 1: bins [1, low_hi)
  int mid_hi = 24;   // channel 2: bins [low_hi, mid_hi)
                     // channel 3: bins [mid_hi, length/2]
};

// waveform [L] -> [C x L] frame; channel 0 is the waveform itself
inline Tensor band_split(const Tensor& wave, int channels, const BandSplit& bands = {}) {
  const int L = static_cast<int>(wave.size());
  std::vector<std::complex<double>> spec = dft(wave.data());
  auto band = [&](int lo, int hi) {
    std::vector<std::complex<double>> s(static_cast<std::size_t>(L), {0.0, 0.0});
    for (int k = lo; k < hi && k <= L / 2; ++k) {
      s[static_cast<std::size_t>(k)] = spec[static_cast<std::size_t>(k)];
      if (k > 0 && k < L / 2 + (L % 2))
        s[static_cast<std::size_t>(L - k)] = spec[static_cast<std::size_t>(L - k)];
    }
    fft_inplace(s, true);
    std::vector<double> out(static_cast<std::size_t>(L));
    for (int t = 0; t < L; ++t) out[static_cast<std::size_t>(t)] = s[static_cast<std::size_t>(t)].real();
    return out;
  };
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(channels) * L);
  v.insert(v.end(), wave.data().begin(), wave.data().end());
  if (channels > 1) {
    auto b = band(1, bands.low_hi);
    v.insert(v.end(), b.begin(), b.end());
  }
  if (channels > 2) {
    auto b = band(bands.low_hi, bands.mid_hi);
    v.insert(v.end(), b.begin(), b.end());
  }
  if (channels > 3) {
    auto b = band(bands.mid_hi, L / 2 + 1);
    v.insert(v.end(), b.begin(), b.end());
  }
  if (channels > 4) throw std::invalid_argument("band_split: at most 4 channels");
  return Tensor({channels, L}, std::move(v));
}

struct DataConfig {
  int channels = 4;
  int length = 128;
  SourceParams harmonic{SourceKind::kHarmonic, 2.0, 6.0, 0.5, 1.0, 0.0, 1.0, 16.0, 0};
  SourceParams percussive{SourceKind::kPercussive, 2.0, 5.0, 0.5, 1.0, 2.0, 6.0, 0.0, 0};
  // 1 = stem parameters fully driven by a shared per-sample draw, 0 = fully
  // independent stems
  double coupling = 0.85;
  std::uint64_t seed = 1;
};

inline MixtureSample make_sample(const DataConfig& cfg, std::uint64_t index) {
  Rng rng(derive_seed(cfg.seed, index));
  const double g = rng.uniform();  // shared musical context for both stems
  auto coupled = [&](double lo, double hi, Rng& r) {
    const double u = cfg.coupling * g + (1.0 - cfg.coupling) * r.uniform();
    return lo + (hi - lo) * u;
  };

  // pin the coupled draws by narrowing the ranges handed to the generators
  Rng hr(rng.raw());
  SourceParams hp = cfg.harmonic;
  const double hf = coupled(hp.freq_lo, hp.freq_hi, hr);
  const double ha = coupled(hp.amp_lo, hp.amp_hi, hr);
  hp.freq_lo = hp.freq_hi = hf;
  hp.amp_lo = hp.amp_hi = ha;
  Tensor hwave = gen_harmonic(hp, hr, cfg.length);

  Rng pr(rng.raw());
  SourceParams pp = cfg.percussive;
  const double pf = coupled(pp.freq_lo, pp.freq_hi, pr);
  const double pa = coupled(pp.amp_lo, pp.amp_hi, pr);
  pp.freq_lo = pp.freq_hi = pf;
  pp.amp_lo = pp.amp_hi = pa;
  Tensor pwave = gen_percussive(pp, pr, cfg.length);

  Tensor hstem = band_split(hwave, cfg.channels);
  Tensor pstem = band_split(pwave, cfg.channels);

  std::vector<double> mix(static_cast<std::size_t>(hstem.size()));
  double peak = 0.0;
  for (std::int64_t i = 0; i < hstem.size(); ++i) {
    mix[static_cast<std::size_t>(i)] = hstem.at(i) + pstem.at(i);
    peak = std::max(peak, std::abs(mix[static_cast<std::size_t>(i)]));
  }
  const double factor = peak > 1e-12 ? 1.0 / peak : 1.0;

  auto scaled = [&](const Tensor& t) {
    std::vector<double> v(t.data().begin(), t.data().end());
    for (double& x : v) x *= factor;
    return Tensor(t.shape(), std::move(v));
  };
  for (double& x : mix) x *= factor;

  MixtureSample out;
  out.mixture = Tensor({cfg.channels, cfg.length}, std::move(mix));
  out.stems = {scaled(hstem), scaled(pstem)};
  out.params = {SourceDraw{SourceKind::kHarmonic, hf, ha, 0.0, 0},
                SourceDraw{SourceKind::kPercussive, pf, pa, 0.0, 0}};
  out.norm_factor = factor;
  return out;
}

inline std::vector<MixtureSample> make_dataset(const DataConfig& cfg, int size) {
  if (size <= 0) throw std::invalid_argument("make_dataset: size must be > 0");
  cfg.harmonic.validate();
  cfg.percussive.validate();
  std::vector<MixtureSample> out;
  out.reserve(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) out.push_back(make_sample(cfg, static_cast<std::uint64_t>(i)));
  return out;
}

// geometric/arithmetic mean ratio of the power spectrum (DC excluded)
inline double spectral_flatness(std::span<const double> x) {
  auto spec = dft(x);
  const int half = static_cast<int>(x.size()) / 2;
  double log_sum = 0.0, lin_sum = 0.0;
  int count = 0;
  for (int k = 1; k <= half; ++k) {
    const double p = std::norm(spec[static_cast<std::size_t>(k)]) + 1e-18;
    log_sum += std::log(p);
    lin_sum += p;
    ++count;
  }
  if (count == 0) return 0.0;
  return std::exp(log_sum / count) / (lin_sum / count);
}

// 16-bit PCM mono export of one channel
inline void write_wav(const std::string& path, std::span<const double> samples,
                      int sample_rate = 8000) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_wav: cannot open " + path);
  auto put_u32 = [&](std::uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                 static_cast<char>(v >> 24)};
    f.write(b, 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    f.write(b, 2);
  };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  f.write("RIFF", 4);
  put_u32(36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(sample_rate));
  put_u32(static_cast<std::uint32_t>(sample_rate * 2));
  put_u16(2);
  put_u16(16);
  f.write("data", 4);
  put_u32(data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
}

}  // namespace compodiff
