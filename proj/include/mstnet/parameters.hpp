#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mstnet/ops.hpp"

namespace mstnet {

template <typename Real>
struct NamedParameter {
  std::string name;
  Tensor<Real> tensor;
};

template <typename Real>
using ParameterList = std::vector<NamedParameter<Real>>;

template <typename Real>
std::size_t parameter_count(const ParameterList<Real>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

// Glorot-uniform initialization with explicit fans.
template <typename Real>
Tensor<Real> glorot(Shape shape, std::size_t fan_in, std::size_t fan_out,
                    std::mt19937_64& rng) {
  Tensor<Real> t(std::move(shape), true);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto& v : t.data()) v = static_cast<Real>(u(rng));
  return t;
}

template <typename Real>
Tensor<Real> param_zeros(Shape shape) {
  return Tensor<Real>(std::move(shape), true);
}

template <typename Real>
Tensor<Real> param_ones(Shape shape) {
  return Tensor<Real>::full(std::move(shape), Real(1), true);
}

// x[n x in] W[in x out] + b[out]
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& weight,
                    const Tensor<Real>& bias) {
  return add_bias(matmul(x, weight), bias);
}

// Vector form: x[in] -> [out].
template <typename Real>
Tensor<Real> linear_vec(const Tensor<Real>& x, const Tensor<Real>& weight,
                        const Tensor<Real>& bias) {
  return reshape(linear(reshape(x, {1, x.size()}), weight, bias),
                 {weight.dim(1)});
}

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias-corrected moments. Moment buffers are kept in double so
// the update sequence does not depend on the parameter precision.
template <typename Real>
class Adam {
 public:
  Adam(ParameterList<Real> params, AdamOptions options)
      : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.size(), 0.0);
      v_.emplace_back(p.tensor.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void step() {
    ++t_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& tensor = params_[k].tensor;
      if (!tensor.has_grad()) continue;
      auto data = tensor.data();
      auto grad = tensor.grad();
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m_[k][i] = b1 * m_[k][i] + (1.0 - b1) * g;
        v_[k][i] = b2 * v_[k][i] + (1.0 - b2) * g * g;
        const double mhat = m_[k][i] / c1;
        const double vhat = v_[k][i] / c2;
        data[i] -= static_cast<Real>(options_.learning_rate * mhat /
                                     (std::sqrt(vhat) + options_.epsilon));
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  ParameterList<Real> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace mstnet
