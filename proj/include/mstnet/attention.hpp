#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mstnet/parameters.hpp"

namespace mstnet {

// Multi-head scaled dot-product attention projections (no biases on Q/K/V,
// biased output projection).
template <typename Real>
struct AttentionParams {
  Tensor<Real> wq, wk, wv, wo, bo;
  std::size_t heads = 1;

  static AttentionParams create(std::size_t width, std::size_t heads,
                                std::mt19937_64& rng) {
    if (heads == 0 || width % heads != 0) {
      throw ConfigError("attention width " + std::to_string(width) +
                        " not divisible by " + std::to_string(heads) +
                        " heads");
    }
    AttentionParams p;
    p.heads = heads;
    p.wq = glorot<Real>({width, width}, width, width, rng);
    p.wk = glorot<Real>({width, width}, width, width, rng);
    p.wv = glorot<Real>({width, width}, width, width, rng);
    p.wo = glorot<Real>({width, width}, width, width, rng);
    p.bo = param_zeros<Real>({width});
    return p;
  }

  void collect(const std::string& prefix, ParameterList<Real>& out) const {
    out.push_back({prefix + ".wq", wq});
    out.push_back({prefix + ".wk", wk});
    out.push_back({prefix + ".wv", wv});
    out.push_back({prefix + ".wo", wo});
    out.push_back({prefix + ".bo", bo});
  }
};

// queries[Nq x d] attend over context[Nc x d]. When `weights_out` is given,
// the per-head [Nq x Nc] probability matrices are appended to it.
template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& queries,
                                  const Tensor<Real>& context,
                                  const AttentionParams<Real>& p,
                                  std::vector<Tensor<Real>>* weights_out = nullptr) {
  const std::size_t d = p.wq.dim(0);
  if (queries.rank() != 2 || context.rank() != 2 || queries.dim(1) != d ||
      context.dim(1) != d) {
    throw DimensionError("attention: queries " + shape_str(queries.shape()) +
                         " and context " + shape_str(context.shape()) +
                         " must both have width " + std::to_string(d));
  }
  const std::size_t dh = d / p.heads;
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
  const Tensor<Real> q = matmul(queries, p.wq);
  const Tensor<Real> k = matmul(context, p.wk);
  const Tensor<Real> v = matmul(context, p.wv);
  std::vector<Tensor<Real>> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const auto qh = p.heads == 1 ? q : slice_cols(q, h * dh, dh);
    const auto kh = p.heads == 1 ? k : slice_cols(k, h * dh, dh);
    const auto vh = p.heads == 1 ? v : slice_cols(v, h * dh, dh);
    const auto attn = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    if (weights_out) weights_out->push_back(attn);
    heads.push_back(matmul(attn, vh));
  }
  const Tensor<Real> merged = p.heads == 1 ? heads.front() : concat(heads, 1);
  return linear(merged, p.wo, p.bo);
}

}  // namespace mstnet
