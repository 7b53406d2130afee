#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mstnet/errors.hpp"

namespace mstnet::spectral {

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 transform; n must be a power of two.
template <typename Real>
void radix2(std::vector<std::complex<Real>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const Real sign = inverse ? Real(1) : Real(-1);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const Real ang = sign * Real(2) * std::numbers::pi_v<Real> /
                     static_cast<Real>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles computed directly rather than by recurrence to keep
        // round-off at machine precision for the larger sizes.
        const Real a_k = ang * static_cast<Real>(k);
        const std::complex<Real> w(std::cos(a_k), std::sin(a_k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    for (auto& v : a) v /= static_cast<Real>(n);
  }
}

// Chirp-z (Bluestein) transform for arbitrary n via a power-of-two
// circular convolution.
template <typename Real>
std::vector<std::complex<Real>> bluestein(
    const std::vector<std::complex<Real>>& x) {
  const std::size_t n = x.size();
  const std::size_t m = next_power_of_two(2 * n - 1);
  std::vector<std::complex<Real>> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small.
    const std::size_t k2 = (k * k) % (2 * n);
    const Real ang = -std::numbers::pi_v<Real> * static_cast<Real>(k2) /
                     static_cast<Real>(n);
    chirp[k] = {std::cos(ang), std::sin(ang)};
  }
  std::vector<std::complex<Real>> a(m), b(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  b[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    b[k] = std::conj(chirp[k]);
    b[m - k] = std::conj(chirp[k]);
  }
  radix2(a, false);
  radix2(b, false);
  for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
  radix2(a, true);
  std::vector<std::complex<Real>> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * chirp[k];
  return out;
}

}  // namespace detail

// Forward DFT, X[f] = sum_t x[t] exp(-2 pi i f t / n), for any n >= 1.
template <typename Real>
std::vector<std::complex<Real>> fft(std::span<const Real> x) {
  std::vector<std::complex<Real>> a(x.begin(), x.end());
  if (a.size() <= 1) return a;
  if (detail::is_power_of_two(a.size())) {
    detail::radix2(a, false);
    return a;
  }
  return detail::bluestein(a);
}

// Channel-averaged magnitude spectrum over frequencies 1..floor(T/2);
// index i of `amplitude` holds frequency i + 1. The DC bin is dropped.
template <typename Real>
struct AmplitudeSpectrum {
  std::vector<Real> amplitude;
  std::size_t series_length = 0;

  Real at_frequency(std::size_t f) const { return amplitude.at(f - 1); }
};

template <typename Real>
struct PeriodEntry {
  std::size_t frequency;
  std::size_t period;
  Real amplitude;
};

template <typename Real>
struct PeriodSet {
  std::vector<PeriodEntry<Real>> entries;
  std::size_t k_top() const { return entries.size(); }
};

// x is a row-major [T x C] series (time-major).
template <typename Real>
AmplitudeSpectrum<Real> amplitude_spectrum(std::span<const Real> x,
                                           std::size_t T, std::size_t C) {
  if (T < 4) {
    throw DimensionError("amplitude_spectrum: series too short (T=" +
                         std::to_string(T) + ", need >= 4)");
  }
  if (x.size() != T * C || C == 0) {
    throw DimensionError("amplitude_spectrum: " + std::to_string(x.size()) +
                         " values for T=" + std::to_string(T) +
                         ", C=" + std::to_string(C));
  }
  const std::size_t half = T / 2;
  AmplitudeSpectrum<Real> out;
  out.series_length = T;
  out.amplitude.assign(half, Real(0));
  std::vector<Real> channel(T);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) channel[t] = x[t * C + c];
    const auto spec = fft<Real>(channel);
    for (std::size_t f = 1; f <= half; ++f) out.amplitude[f - 1] += std::abs(spec[f]);
  }
  // Flush round-off below the transform's noise floor so flat channels
  // produce exact ties (and hence the documented low-frequency tie-break).
  Real max_abs = 0;
  for (Real v : x) max_abs = std::max(max_abs, std::abs(v));
  const Real floor = Real(8) * static_cast<Real>(T) * max_abs *
                     std::numeric_limits<Real>::epsilon();
  for (auto& a : out.amplitude) {
    a /= static_cast<Real>(C);
    if (a <= floor) a = Real(0);
  }
  return out;
}

inline std::size_t period_for(std::size_t T, std::size_t f) {
  return (T + f - 1) / f;
}

// The k_top strongest frequencies, strongest first; ties go to the lower
// frequency index. period = ceil(T / f).
template <typename Real>
PeriodSet<Real> top_k_periods(const AmplitudeSpectrum<Real>& spectrum,
                              std::size_t k_top) {
  const std::size_t half = spectrum.amplitude.size();
  if (k_top < 1 || k_top > half) {
    throw ConfigError("top_k_periods: k_top=" + std::to_string(k_top) +
                      " outside [1, " + std::to_string(half) + "]");
  }
  std::vector<std::size_t> order(half);
  for (std::size_t i = 0; i < half; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return spectrum.amplitude[a] > spectrum.amplitude[b];
  });
  PeriodSet<Real> out;
  for (std::size_t i = 0; i < k_top; ++i) {
    const std::size_t f = order[i] + 1;
    out.entries.push_back(
        {f, period_for(spectrum.series_length, f), spectrum.amplitude[order[i]]});
  }
  return out;
}

}  // namespace mstnet::spectral
