#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mstnet/parameters.hpp"
#include "mstnet/spectral.hpp"

namespace mstnet::temporal {

// A [T x C] series folded by period p into [C x p x f]: column j holds the
// j-th period, the tail padded with pad_len zeros.
template <typename Real>
struct Folded2D {
  Tensor<Real> data;
  std::size_t period = 0;
  std::size_t frequency = 0;
  std::size_t pad_len = 0;
};

template <typename Real>
Folded2D<Real> fold(const Tensor<Real>& x, std::size_t period,
                    std::size_t frequency) {
  if (x.rank() != 2) throw DimensionError("fold: expected [T x C], got " + shape_str(x.shape()));
  const std::size_t T = x.dim(0), C = x.dim(1);
  if (frequency < 1 || period < 1 || period * frequency < T) {
    throw DimensionError("fold: p*f = " + std::to_string(period) + "*" +
                         std::to_string(frequency) + " < T = " + std::to_string(T));
  }
  const std::size_t p = period, f = frequency;
  auto index = std::make_shared<std::vector<std::int64_t>>(C * p * f, -1);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const std::size_t t = j * p + i;
        if (t < T) (*index)[(c * p + i) * f + j] = static_cast<std::int64_t>(t * C + c);
      }
    }
  }
  return {gather(x, {C, p, f}, std::move(index)), p, f, p * f - T};
}

template <typename Real>
Tensor<Real> unfold(const Folded2D<Real>& y, std::size_t T) {
  const auto& d = y.data;
  if (d.rank() != 3 || d.dim(1) != y.period || d.dim(2) != y.frequency ||
      y.period * y.frequency < T || y.period * y.frequency - T != y.pad_len) {
    throw DimensionError("unfold: folded " + shape_str(d.shape()) + " (p=" +
                         std::to_string(y.period) + ", f=" + std::to_string(y.frequency) +
                         ", pad=" + std::to_string(y.pad_len) +
                         ") inconsistent with T=" + std::to_string(T));
  }
  const std::size_t C = d.dim(0), p = y.period, f = y.frequency;
  auto index = std::make_shared<std::vector<std::int64_t>>(T * C);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      (*index)[t * C + c] = static_cast<std::int64_t>((c * p + t % p) * f + t / p);
    }
  }
  return gather(d, {T, C}, std::move(index));
}

// One square kernel bank per size, each [C x C x k x k].
template <typename Real>
struct TimesBlockParams {
  std::vector<std::size_t> kernel_sizes;
  std::vector<Tensor<Real>> kernels;
  std::size_t k_top = 3;
  // Route gradients through the selected amplitudes into the block input.
  bool amplitude_gradient = false;

  static TimesBlockParams create(std::size_t channels,
                                 const std::vector<std::size_t>& sizes,
                                 std::size_t k_top, std::mt19937_64& rng) {
    TimesBlockParams p;
    p.k_top = k_top;
    for (std::size_t k : sizes) {
      if (k % 2 == 0) throw ConfigError("inception kernel sizes must be odd, got " + std::to_string(k));
      p.kernel_sizes.push_back(k);
      p.kernels.push_back(glorot<Real>({channels, channels, k, k}, channels * k * k,
                                       channels * k * k, rng));
    }
    if (p.kernels.empty()) throw ConfigError("inception block needs at least one kernel size");
    return p;
  }

  void zero() {
    for (auto& k : kernels) std::fill(k.data().begin(), k.data().end(), Real(0));
  }

  void collect(const std::string& prefix, ParameterList<Real>& out) const {
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      out.push_back({prefix + ".k" + std::to_string(kernel_sizes[i]), kernels[i]});
    }
  }
};

// Mean of same-padded conv2d branches, one per kernel size.
template <typename Real>
Folded2D<Real> inception_filter(const Folded2D<Real>& y,
                                const TimesBlockParams<Real>& params) {
  Tensor<Real> acc;
  for (const auto& k : params.kernels) {
    const Tensor<Real> branch = conv2d(y.data, k);
    acc = acc.defined() ? add(acc, branch) : branch;
  }
  Folded2D<Real> out = y;
  out.data = scale(acc, Real(1) / static_cast<Real>(params.kernels.size()));
  return out;
}

template <typename Real>
std::vector<Real> softmax_weights(const std::vector<Real>& amplitudes) {
  Real mx = amplitudes.front();
  for (Real a : amplitudes) mx = std::max(mx, a);
  std::vector<Real> w(amplitudes.size());
  Real z = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(amplitudes[i] - mx);
    z += w[i];
  }
  for (Real& v : w) v /= z;
  return w;
}

// Channel-averaged |DFT| of x[T x C] at the given frequencies, on the tape.
// d|X_f| / dx_t = (Re X_f cos w t - Im X_f sin w t) / |X_f|, w = 2 pi f / T.
template <typename Real>
Tensor<Real> amplitudes_at(const Tensor<Real>& x, const std::vector<std::size_t>& freqs) {
  const std::size_t T = x.dim(0), C = x.dim(1), k = freqs.size();
  auto spec = std::make_shared<std::vector<std::complex<Real>>>(k * C);
  std::vector<Real> out(k, Real(0));
  std::vector<Real> channel(T);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) channel[t] = x[t * C + c];
    const auto X = spectral::fft<Real>(channel);
    for (std::size_t i = 0; i < k; ++i) {
      (*spec)[i * C + c] = X.at(freqs[i]);
      out[i] += std::abs(X[freqs[i]]) / static_cast<Real>(C);
    }
  }
  return detail::make_result<Real>({k}, std::move(out), {x}, [spec, freqs, T, C](const Node<Real>& n) {
    Real* g = detail::parent_grad(n, 0);
    if (!g) return;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      const Real w = Real(2) * std::numbers::pi_v<Real> * static_cast<Real>(freqs[i]) /
                     static_cast<Real>(T);
      for (std::size_t c = 0; c < C; ++c) {
        const auto X = (*spec)[i * C + c];
        const Real mag = std::abs(X);
        if (mag == Real(0)) continue;
        const Real s = n.grad[i] / (static_cast<Real>(C) * mag);
        for (std::size_t t = 0; t < T; ++t) {
          const Real a = w * static_cast<Real>(t);
          g[t * C + c] += s * (X.real() * std::cos(a) - X.imag() * std::sin(a));
        }
      }
    }
  });
}

// Sum of branches weighted by the softmax of their (detached) amplitudes.
template <typename Real>
Tensor<Real> aggregate(const std::vector<std::pair<Tensor<Real>, Real>>& branches,
                       std::vector<Real>* weights_out = nullptr) {
  if (branches.empty()) throw DimensionError("aggregate: no period branches");
  std::vector<Real> amps;
  for (const auto& b : branches) {
    if (b.first.shape() != branches.front().first.shape()) {
      throw DimensionError("aggregate: branch shapes differ " +
                           shape_str(b.first.shape()) + " vs " +
                           shape_str(branches.front().first.shape()));
    }
    amps.push_back(b.second);
  }
  const std::vector<Real> w = softmax_weights(amps);
  if (weights_out) *weights_out = w;
  if (branches.size() == 1) return branches.front().first;
  Tensor<Real> out;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const Tensor<Real> term = scale(branches[i].first, w[i]);
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

// Periods from the input's own spectrum, per-period fold/filter/unfold,
// amplitude-weighted aggregation, additive residual.
template <typename Real>
Tensor<Real> timesblock_forward(const Tensor<Real>& x,
                                const TimesBlockParams<Real>& params,
                                spectral::PeriodSet<Real>* periods_out = nullptr) {
  if (x.rank() != 2) throw DimensionError("timesblock: expected [T x C], got " + shape_str(x.shape()));
  const std::size_t T = x.dim(0), C = x.dim(1);
  const auto spectrum = spectral::amplitude_spectrum<Real>(x.data(), T, C);
  const auto periods = spectral::top_k_periods(spectrum, params.k_top);
  std::vector<std::pair<Tensor<Real>, Real>> branches;
  for (const auto& e : periods.entries) {
    const auto folded = fold(x, e.period, e.frequency);
    branches.emplace_back(unfold(inception_filter(folded, params), T), e.amplitude);
  }
  if (periods_out) *periods_out = periods;
  if (!params.amplitude_gradient) return add(x, aggregate(branches));

  // Same weighted sum with the weights on the tape: w[1 x k] B[k x TC].
  std::vector<std::size_t> freqs;
  std::vector<Tensor<Real>> rows;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    freqs.push_back(periods.entries[i].frequency);
    rows.push_back(reshape(branches[i].first, {1, T * C}));
  }
  const Tensor<Real> w = reshape(softmax(amplitudes_at(x, freqs), 0), {1, freqs.size()});
  return add(x, reshape(matmul(w, concat(rows, 0)), {T, C}));
}

template <typename Real>
class TemporalEncoder {
 public:
  TemporalEncoder() = default;

  TemporalEncoder(std::size_t channels, std::size_t blocks,
                  const std::vector<std::size_t>& kernel_sizes, std::size_t k_top,
                  std::mt19937_64& rng, bool amplitude_gradient = false) {
    for (std::size_t b = 0; b < blocks; ++b) {
      blocks_.push_back(TimesBlockParams<Real>::create(channels, kernel_sizes, k_top, rng));
      blocks_.back().amplitude_gradient = amplitude_gradient;
    }
  }

  std::vector<TimesBlockParams<Real>>& blocks() { return blocks_; }

  Tensor<Real> forward(const Tensor<Real>& x) const {
    Tensor<Real> h = x;
    for (const auto& b : blocks_) h = timesblock_forward(h, b);
    return h;
  }

  void collect(const std::string& prefix, ParameterList<Real>& out) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      blocks_[b].collect(prefix + ".block" + std::to_string(b), out);
    }
  }

 private:
  std::vector<TimesBlockParams<Real>> blocks_;
};

}  // namespace mstnet::temporal
