// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace compodiff {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// iterative radix-2 transform; invert=true applies the 1/n factor
inline void fft_inplace(std::vector<std::complex<double>>& a, bool invert) {
  const int n = static_cast<int>(a.size());
  if (!is_pow2(n)) throw std::invalid_argument("fft: length must be a power of two");
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = (invert ? 2.0 : -2.0) * 3.14159265358979323846 / len;
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[static_cast<std::size_t>(i + j)];
        const std::complex<double> v = a[static_cast<std::size_t>(i + j + len / 2)] * w;
        a[static_cast<std::size_t>(i + j)] = u + v;
        a[static_cast<std::size_t>(i + j + len / 2)] = u - v;
        w *= wl;
      }
    }
  }
  if (invert)
    for (auto& x : a) x /= n;
}

// spectrum of a real signal; naive O(n^2) fallback for non power-of-two sizes
inline std::vector<std::complex<double>> dft(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  std::vector<std::complex<double>> a(static_cast<std::size_t>(n));
  if (is_pow2(n)) {
    for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    fft_inplace(a, false);
    return a;
  }
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int t = 0; t < n; ++t) {
      const double ang = -2.0 * 3.14159265358979323846 * k * t / n;
      acc += x[static_cast<std::size_t>(t)] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    a[static_cast<std::size_t>(k)] = acc;
  }
  return a;
}

}  // namespace compodiff
