#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mstnet/tensor.hpp"

namespace mstnet {

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b,
                               const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result<Real>(
      a.shape(), std::move(out), {a, b}, [](const Node<Real>& n) {
        for (std::size_t k = 0; k < 2; ++k) {
          if (Real* g = detail::parent_grad(n, k)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
          }
        }
      });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result<Real>(
      a.shape(), std::move(out), {a, b}, [](const Node<Real>& n) {
        if (Real* g = detail::parent_grad(n, 0)) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
        }
        if (Real* g = detail::parent_grad(n, 1)) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
        }
      });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result<Real>(
      a.shape(), std::move(out), {a, b}, [](const Node<Real>& n) {
        const auto& av = n.parents[0]->data;
        const auto& bv = n.parents[1]->data;
        if (Real* g = detail::parent_grad(n, 0)) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (Real* g = detail::parent_grad(n, 1)) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * av[i];
        }
      });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real s) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  return detail::make_result<Real>(x.shape(), std::move(out), {x},
                                   [s](const Node<Real>& n) {
                                     if (Real* g = detail::parent_grad(n, 0)) {
                                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                                         g[i] += n.grad[i] * s;
                                     }
                                   });
}

// x[..., n] + bias[n], broadcast over every leading index.
template <typename Real>
Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& bias) {
  const std::size_t n = bias.size();
  if (x.rank() == 0 || x.shape().back() != n) {
    throw DimensionError("add_bias: " + shape_str(x.shape()) + " vs bias " +
                         shape_str(bias.shape()));
  }
  std::vector<Real> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % n];
  return detail::make_result<Real>(
      x.shape(), std::move(out), {x, bias}, [n](const Node<Real>& nd) {
        if (Real* g = detail::parent_grad(nd, 0)) {
          for (std::size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i];
        }
        if (Real* g = detail::parent_grad(nd, 1)) {
          for (std::size_t i = 0; i < nd.grad.size(); ++i) g[i % n] += nd.grad[i];
        }
      });
}

// Tanh approximation of GELU.
template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  constexpr Real kC = Real(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real kA = Real(0.044715);
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real v = x[i];
    out[i] = Real(0.5) * v * (Real(1) + std::tanh(kC * (v + kA * v * v * v)));
  }
  return detail::make_result<Real>(
      x.shape(), std::move(out), {x}, [](const Node<Real>& n) {
        Real* g = detail::parent_grad(n, 0);
        if (!g) return;
        const auto& xv = n.parents[0]->data;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          const Real v = xv[i];
          const Real u = kC * (v + kA * v * v * v);
          const Real t = std::tanh(u);
          const Real du = kC * (Real(1) + Real(3) * kA * v * v);
          const Real d =
              Real(0.5) * (Real(1) + t) + Real(0.5) * v * (Real(1) - t * t) * du;
          g[i] += n.grad[i] * d;
        }
      });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) +
                         " by " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n, Real(0));
  const Real* av = a.data().data();
  const Real* bv = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    Real* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real s = av[i * k + p];
      const Real* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return detail::make_result<Real>(
      {m, n}, std::move(out), {a, b}, [m, k, n](const Node<Real>& nd) {
        const Real* gv = nd.grad.data();
        const Real* av = nd.parents[0]->data.data();
        const Real* bv = nd.parents[1]->data.data();
        if (Real* ga = detail::parent_grad(nd, 0)) {
          // ga += g · bᵀ
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const Real* brow = bv + p * n;
              const Real* grow = gv + i * n;
              Real acc = 0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (Real* gb = detail::parent_grad(nd, 1)) {
          // gb += aᵀ · g
          for (std::size_t i = 0; i < m; ++i) {
            const Real* grow = gv + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const Real s = av[i * k + p];
              Real* gbrow = gb + p * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Index-driven data movement
// ---------------------------------------------------------------------------

// out[i] = index[i] < 0 ? 0 : x[index[i]]. Backward scatters. Underlies
// reshape, transpose, slicing, row lookup, and the period fold/unfold.
template <typename Real>
Tensor<Real> gather(const Tensor<Real>& x, Shape out_shape,
                    std::shared_ptr<const std::vector<std::int64_t>> index) {
  if (index->size() != shape_size(out_shape)) {
    throw DimensionError("gather: index map of " +
                         std::to_string(index->size()) + " for output " +
                         shape_str(out_shape));
  }
  std::vector<Real> out(index->size(), Real(0));
  const auto n_in = static_cast<std::int64_t>(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::int64_t src = (*index)[i];
    if (src >= n_in) throw DimensionError("gather: index out of range");
    if (src >= 0) out[i] = x[static_cast<std::size_t>(src)];
  }
  return detail::make_result<Real>(
      std::move(out_shape), std::move(out), {x},
      [index](const Node<Real>& n) {
        Real* g = detail::parent_grad(n, 0);
        if (!g) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          const std::int64_t src = (*index)[i];
          if (src >= 0) g[src] += n.grad[i];
        }
      });
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " +
                         shape_str(shape));
  }
  std::vector<Real> out(x.values());
  return detail::make_result<Real>(
      std::move(shape), std::move(out), {x}, [](const Node<Real>& n) {
        if (Real* g = detail::parent_grad(n, 0)) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
        }
      });
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& x) {
  if (x.rank() != 2) {
    throw DimensionError("transpose: expected a matrix, got " +
                         shape_str(x.shape()));
  }
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto index = std::make_shared<std::vector<std::int64_t>>(r * c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      (*index)[i * r + j] = static_cast<std::int64_t>(j * c + i);
    }
  }
  return gather(x, {c, r}, std::move(index));
}

// Columns [start, start + count) of a matrix.
template <typename Real>
Tensor<Real> slice_cols(const Tensor<Real>& x, std::size_t start,
                        std::size_t count) {
  if (x.rank() != 2 || start + count > x.dim(1)) {
    throw DimensionError("slice_cols: bad range on " + shape_str(x.shape()));
  }
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto index = std::make_shared<std::vector<std::int64_t>>(r * count);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < count; ++j) {
      (*index)[i * count + j] = static_cast<std::int64_t>(i * c + start + j);
    }
  }
  return gather(x, {r, count}, std::move(index));
}

// Row `row` of a matrix, as a vector.
template <typename Real>
Tensor<Real> select_row(const Tensor<Real>& x, std::size_t row) {
  if (x.rank() != 2 || row >= x.dim(0)) {
    throw DimensionError("select_row: row " + std::to_string(row) + " of " +
                         shape_str(x.shape()));
  }
  const std::size_t c = x.dim(1);
  auto index = std::make_shared<std::vector<std::int64_t>>(c);
  for (std::size_t j = 0; j < c; ++j) {
    (*index)[j] = static_cast<std::int64_t>(row * c + j);
  }
  return gather(x, {c}, std::move(index));
}

// Concatenation along `axis`; all other extents must agree.
template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> widths;  // per part: extent(axis) * inner
  std::size_t total_axis = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) {
      throw DimensionError("concat: rank mismatch " + shape_str(s) + " vs " +
                           shape_str(first));
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DimensionError("concat: extent mismatch " + shape_str(s) +
                             " vs " + shape_str(first));
      }
    }
    total_axis += s[axis];
    widths.push_back(s[axis] * inner);
  }
  Shape out_shape = first;
  out_shape[axis] = total_axis;
  const std::size_t row = total_axis * inner;
  std::vector<Real> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * widths[k], widths[k],
                  out.data() + o * row + offset);
    }
    offset += widths[k];
  }
  return detail::make_result<Real>(
      std::move(out_shape), std::move(out), parts,
      [widths, outer, row](const Node<Real>& n) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (Real* g = detail::parent_grad(n, k)) {
            for (std::size_t o = 0; o < outer; ++o) {
              const Real* src = n.grad.data() + o * row + off;
              Real* dst = g + o * widths[k];
              for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
            }
          }
          off += widths[k];
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real s = 0;
  for (Real v : x.data()) s += v;
  return detail::make_result<Real>({1}, {s}, {x}, [](const Node<Real>& n) {
    if (Real* g = detail::parent_grad(n, 0)) {
      const Real gv = n.grad[0];
      const std::size_t len = n.parents[0]->data.size();
      for (std::size_t i = 0; i < len; ++i) g[i] += gv;
    }
  });
}

// Mean over the rows of a matrix: [n x d] -> [d].
template <typename Real>
Tensor<Real> mean_rows(const Tensor<Real>& x) {
  if (x.rank() != 2 || x.dim(0) == 0) {
    throw DimensionError("mean_rows: expected a non-empty matrix, got " +
                         shape_str(x.shape()));
  }
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<Real> out(c, Real(0));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j] += x[i * c + j];
  }
  const Real inv = Real(1) / static_cast<Real>(r);
  for (Real& v : out) v *= inv;
  return detail::make_result<Real>(
      {c}, std::move(out), {x}, [r, c, inv](const Node<Real>& n) {
        if (Real* g = detail::parent_grad(n, 0)) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j] * inv;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalizations
// ---------------------------------------------------------------------------

// Softmax along `axis`, with max subtraction.
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis) {
  if (axis >= x.rank() || x.dim(axis) == 0) {
    throw DimensionError("softmax: bad axis for " + shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  const std::size_t len = x.dim(axis);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<Real> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
      Real z = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const Real e = std::exp(x[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  }
  return detail::make_result<Real>(
      x.shape(), std::move(out), {x},
      [outer, inner, len](const Node<Real>& n) {
        Real* g = detail::parent_grad(n, 0);
        if (!g) return;
        const auto& y = n.data;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            Real dot = 0;
            for (std::size_t j = 0; j < len; ++j) {
              dot += n.grad[base + j * inner] * y[base + j * inner];
            }
            for (std::size_t j = 0; j < len; ++j) {
              const std::size_t idx = base + j * inner;
              g[idx] += y[idx] * (n.grad[idx] - dot);
            }
          }
        }
      });
}

namespace detail {

// Normalizes `groups` contiguous runs of `len` values to zero mean, unit
// variance, then applies gain/bias indexed by `affine_index(group, pos)`.
template <typename Real, typename AffineIndex>
Tensor<Real> grouped_norm(const Tensor<Real>& x, const Tensor<Real>& gain,
                          const Tensor<Real>& bias, std::size_t groups,
                          std::size_t len, Real eps, AffineIndex affine_index) {
  std::vector<Real> out(x.size());
  auto xhat = std::make_shared<std::vector<Real>>(x.size());
  auto inv_std = std::make_shared<std::vector<Real>>(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const Real* src = x.data().data() + gi * len;
    Real mean = 0;
    for (std::size_t j = 0; j < len; ++j) mean += src[j];
    mean /= static_cast<Real>(len);
    Real var = 0;
    for (std::size_t j = 0; j < len; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= static_cast<Real>(len);
    const Real is = Real(1) / std::sqrt(var + eps);
    (*inv_std)[gi] = is;
    for (std::size_t j = 0; j < len; ++j) {
      const Real h = (src[j] - mean) * is;
      (*xhat)[gi * len + j] = h;
      const std::size_t a = affine_index(gi, j);
      out[gi * len + j] = h * gain[a] + bias[a];
    }
  }
  return make_result<Real>(
      x.shape(), std::move(out), {x, gain, bias},
      [xhat, inv_std, groups, len, affine_index](const Node<Real>& n) {
        const auto& gv = n.parents[1]->data;
        Real* gx = parent_grad(n, 0);
        Real* gg = parent_grad(n, 1);
        Real* gb = parent_grad(n, 2);
        std::vector<Real> dh(len);
        for (std::size_t gi = 0; gi < groups; ++gi) {
          Real sum_dh = 0, sum_dh_h = 0;
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = gi * len + j;
            const std::size_t a = affine_index(gi, j);
            const Real go = n.grad[idx];
            if (gg) gg[a] += go * (*xhat)[idx];
            if (gb) gb[a] += go;
            dh[j] = go * gv[a];
            sum_dh += dh[j];
            sum_dh_h += dh[j] * (*xhat)[idx];
          }
          if (!gx) continue;
          const Real inv_len = Real(1) / static_cast<Real>(len);
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = gi * len + j;
            gx[idx] += (*inv_std)[gi] *
                       (dh[j] - inv_len * sum_dh - (*xhat)[idx] * inv_len * sum_dh_h);
          }
        }
      });
}

}  // namespace detail

// Normalizes the last axis; eps is added to the variance.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain,
                        const Tensor<Real>& bias, Real eps = Real(1e-5)) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (d < 2 || gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: width " + std::to_string(d) +
                         " with gain " + shape_str(gain.shape()) + ", bias " +
                         shape_str(bias.shape()));
  }
  return detail::grouped_norm(x, gain, bias, x.size() / d, d, eps,
                              [](std::size_t, std::size_t j) { return j; });
}

// Per-channel normalization of x[C x ...] over its spatial extent, with a
// per-channel affine. No batch statistics.
template <typename Real>
Tensor<Real> channel_norm(const Tensor<Real>& x, const Tensor<Real>& gain,
                          const Tensor<Real>& bias, Real eps = Real(1e-5)) {
  if (x.rank() < 2) throw DimensionError("channel_norm: need [C x ...]");
  const std::size_t c = x.dim(0);
  if (gain.size() != c || bias.size() != c) {
    throw DimensionError("channel_norm: " + std::to_string(c) +
                         " channels, gain " + shape_str(gain.shape()));
  }
  return detail::grouped_norm(x, gain, bias, c, x.size() / c, eps,
                              [](std::size_t g, std::size_t) { return g; });
}

// ---------------------------------------------------------------------------
// Convolution and pooling
// ---------------------------------------------------------------------------

namespace detail {

struct Conv3dGeometry {
  std::size_t cin, cout, d, h, w, kd, kh, kw;
};

// Calls fn(out_offset, in_offset, run_length) for every contiguous run of
// overlapping (output, input) positions at kernel offset (a, b, c), using
// zero "same" padding.
template <typename Fn>
void for_each_overlap(const Conv3dGeometry& g, std::size_t a, std::size_t b,
                      std::size_t c, Fn&& fn) {
  const auto pd = static_cast<std::ptrdiff_t>(g.kd / 2);
  const auto ph = static_cast<std::ptrdiff_t>(g.kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(g.kw / 2);
  const auto D = static_cast<std::ptrdiff_t>(g.d);
  const auto H = static_cast<std::ptrdiff_t>(g.h);
  const auto W = static_cast<std::ptrdiff_t>(g.w);
  const std::ptrdiff_t dz = static_cast<std::ptrdiff_t>(a) - pd;
  const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(b) - ph;
  const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(c) - pw;
  const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
  const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
  if (x1 <= x0) return;
  for (std::ptrdiff_t z = std::max<std::ptrdiff_t>(0, -dz);
       z < std::min<std::ptrdiff_t>(D, D - dz); ++z) {
    for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, -dy);
         y < std::min<std::ptrdiff_t>(H, H - dy); ++y) {
      const std::ptrdiff_t out_off = (z * H + y) * W + x0;
      const std::ptrdiff_t in_off = ((z + dz) * H + (y + dy)) * W + x0 + dx;
      fn(static_cast<std::size_t>(out_off), static_cast<std::size_t>(in_off),
         static_cast<std::size_t>(x1 - x0));
    }
  }
}

template <typename Real>
Tensor<Real> conv_same(const Tensor<Real>& x, const Tensor<Real>& kernels,
                       const Tensor<Real>* bias, const Conv3dGeometry g,
                       Shape out_shape) {
  const std::size_t vol = g.d * g.h * g.w;
  const std::size_t taps = g.kd * g.kh * g.kw;
  std::vector<Real> out(g.cout * vol, Real(0));
  const Real* xv = x.data().data();
  const Real* kv = kernels.data().data();
  for (std::size_t co = 0; co < g.cout; ++co) {
    Real* dst = out.data() + co * vol;
    if (bias) std::fill_n(dst, vol, (*bias)[co]);
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const Real* src = xv + ci * vol;
      const Real* k = kv + (co * g.cin + ci) * taps;
      for (std::size_t a = 0; a < g.kd; ++a) {
        for (std::size_t b = 0; b < g.kh; ++b) {
          for (std::size_t c = 0; c < g.kw; ++c) {
            const Real wv = k[(a * g.kh + b) * g.kw + c];
            if (wv == Real(0)) continue;
            for_each_overlap(g, a, b, c,
                             [&](std::size_t oo, std::size_t io, std::size_t len) {
                               Real* o = dst + oo;
                               const Real* s = src + io;
                               for (std::size_t i = 0; i < len; ++i) o[i] += wv * s[i];
                             });
          }
        }
      }
    }
  }
  std::vector<Tensor<Real>> inputs{x, kernels};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return make_result<Real>(
      std::move(out_shape), std::move(out), inputs,
      [g, vol, taps, has_bias](const Node<Real>& n) {
        const Real* xv = n.parents[0]->data.data();
        const Real* kv = n.parents[1]->data.data();
        Real* gx = parent_grad(n, 0);
        Real* gk = parent_grad(n, 1);
        Real* gb = has_bias ? parent_grad(n, 2) : nullptr;
        for (std::size_t co = 0; co < g.cout; ++co) {
          const Real* go = n.grad.data() + co * vol;
          if (gb) {
            Real s = 0;
            for (std::size_t i = 0; i < vol; ++i) s += go[i];
            gb[co] += s;
          }
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const Real* src = xv + ci * vol;
            const std::size_t kbase = (co * g.cin + ci) * taps;
            for (std::size_t a = 0; a < g.kd; ++a) {
              for (std::size_t b = 0; b < g.kh; ++b) {
                for (std::size_t c = 0; c < g.kw; ++c) {
                  const std::size_t t = (a * g.kh + b) * g.kw + c;
                  const Real wv = kv[kbase + t];
                  Real acc = 0;
                  for_each_overlap(
                      g, a, b, c,
                      [&](std::size_t oo, std::size_t io, std::size_t len) {
                        const Real* o = go + oo;
                        if (gk) {
                          const Real* s = src + io;
                          for (std::size_t i = 0; i < len; ++i) acc += o[i] * s[i];
                        }
                        if (gx && wv != Real(0)) {
                          Real* d = gx + ci * vol + io;
                          for (std::size_t i = 0; i < len; ++i) d[i] += wv * o[i];
                        }
                      });
                  if (gk) gk[kbase + t] += acc;
                }
              }
            }
          }
        }
      });
}

}  // namespace detail

// "Same"-padded cross-correlation: x[Cin x D x H x W],
// kernels[Cout x Cin x kd x kh x kw] with odd extents, optional bias[Cout].
template <typename Real>
Tensor<Real> conv3d(const Tensor<Real>& x, const Tensor<Real>& kernels,
                    const Tensor<Real>* bias = nullptr) {
  if (x.rank() != 4 || kernels.rank() != 5 || kernels.dim(1) != x.dim(0)) {
    throw DimensionError("conv3d: input " + shape_str(x.shape()) +
                         " with kernels " + shape_str(kernels.shape()));
  }
  for (std::size_t i = 2; i < 5; ++i) {
    if (kernels.dim(i) % 2 == 0) {
      throw ConfigError("conv3d: even kernel extent " +
                        shape_str(kernels.shape()) + " cannot pad symmetrically");
    }
  }
  if (bias && bias->size() != kernels.dim(0)) {
    throw DimensionError("conv3d: bias " + shape_str(bias->shape()));
  }
  const detail::Conv3dGeometry g{x.dim(0),       kernels.dim(0), x.dim(1),
                                 x.dim(2),       x.dim(3),       kernels.dim(2),
                                 kernels.dim(3), kernels.dim(4)};
  return detail::conv_same(x, kernels, bias, g, {g.cout, g.d, g.h, g.w});
}

// 2D analogue of conv3d: x[Cin x H x W], kernels[Cout x Cin x kh x kw].
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& kernels,
                    const Tensor<Real>* bias = nullptr) {
  if (x.rank() != 3 || kernels.rank() != 4 || kernels.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) +
                         " with kernels " + shape_str(kernels.shape()));
  }
  if (kernels.dim(2) % 2 == 0 || kernels.dim(3) % 2 == 0) {
    throw ConfigError("conv2d: even kernel extent " +
                      shape_str(kernels.shape()) + " cannot pad symmetrically");
  }
  if (bias && bias->size() != kernels.dim(0)) {
    throw DimensionError("conv2d: bias " + shape_str(bias->shape()));
  }
  const detail::Conv3dGeometry g{x.dim(0), kernels.dim(0), 1, x.dim(1),
                                 x.dim(2), 1,              kernels.dim(2),
                                 kernels.dim(3)};
  return detail::conv_same(x, kernels, bias, g, {g.cout, g.h, g.w});
}

// Non-overlapping 2x2x2 average pooling of x[C x D x H x W]; extents even.
template <typename Real>
Tensor<Real> avg_pool3d(const Tensor<Real>& x) {
  if (x.rank() != 4 || x.dim(1) % 2 || x.dim(2) % 2 || x.dim(3) % 2) {
    throw DimensionError("avg_pool3d: need even extents, got " +
                         shape_str(x.shape()));
  }
  const std::size_t C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t d = D / 2, h = H / 2, w = W / 2;
  std::vector<Real> out(C * d * h * w, Real(0));
  auto src_index = [=](std::size_t c, std::size_t z, std::size_t y,
                       std::size_t xx) { return ((c * D + z) * H + y) * W + xx; };
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t z = 0; z < D; ++z)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx)
          out[((c * d + z / 2) * h + y / 2) * w + xx / 2] +=
              x[src_index(c, z, y, xx)] * Real(0.125);
  return detail::make_result<Real>(
      {C, d, h, w}, std::move(out), {x}, [=](const Node<Real>& n) {
        Real* g = detail::parent_grad(n, 0);
        if (!g) return;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t z = 0; z < D; ++z)
            for (std::size_t y = 0; y < H; ++y)
              for (std::size_t xx = 0; xx < W; ++xx)
                g[src_index(c, z, y, xx)] +=
                    n.grad[((c * d + z / 2) * h + y / 2) * w + xx / 2] * Real(0.125);
      });
}

// ---------------------------------------------------------------------------
// Training utilities
// ---------------------------------------------------------------------------

// Inverted dropout: at train time zero each entry with probability p and
// scale survivors by 1/(1-p); identity otherwise.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, Real p, std::mt19937_64* rng) {
  if (!rng || p <= Real(0)) return scale(x, Real(1));
  if (p >= Real(1)) throw ConfigError("dropout rate must be < 1");
  auto mask = std::make_shared<std::vector<Real>>(x.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Real keep = Real(1) / (Real(1) - p);
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = u(*rng) < static_cast<double>(p) ? Real(0) : keep;
    out[i] = x[i] * (*mask)[i];
  }
  return detail::make_result<Real>(x.shape(), std::move(out), {x},
                                   [mask](const Node<Real>& n) {
                                     if (Real* g = detail::parent_grad(n, 0)) {
                                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                                         g[i] += n.grad[i] * (*mask)[i];
                                     }
                                   });
}

// -log softmax(logits)[label] for a single logit vector.
template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw DimensionError("cross_entropy: label " + std::to_string(label) +
                         " for " + std::to_string(logits.size()) + " logits");
  }
  Real mx = -std::numeric_limits<Real>::infinity();
  for (Real v : logits.data()) mx = std::max(mx, v);
  auto probs = std::make_shared<std::vector<Real>>(logits.size());
  Real z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    (*probs)[i] = std::exp(logits[i] - mx);
    z += (*probs)[i];
  }
  for (Real& p : *probs) p /= z;
  const Real loss = -(logits[label] - mx - std::log(z));
  return detail::make_result<Real>(
      {1}, {loss}, {logits}, [probs, label](const Node<Real>& n) {
        if (Real* g = detail::parent_grad(n, 0)) {
          for (std::size_t i = 0; i < probs->size(); ++i) {
            g[i] += n.grad[0] * ((*probs)[i] - (i == label ? Real(1) : Real(0)));
          }
        }
      });
}

}  // namespace mstnet
