#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "mstnet/attention.hpp"
#include "mstnet/ops.hpp"
#include "mstnet/parameters.hpp"
#include "mstnet/temporal.hpp"

namespace mstnet::oracles {

using T64 = Tensor<double>;

inline T64 random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true,
                         double lo = -1.0, double hi = 1.0) {
  T64 t(std::move(shape), requires_grad);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Scalar loss sum(out * w) for a fixed random weight of the same shape, so
// that no output direction is left untested.
class Projector {
 public:
  explicit Projector(std::uint64_t seed) : rng_(seed) {}

  T64 operator()(const T64& out) {
    if (!w_.defined() || w_.shape() != out.shape()) {
      w_ = random_tensor(out.shape(), rng_, false);
    }
    return sum(mul(out, w_));
  }

 private:
  std::mt19937_64 rng_;
  T64 w_;
};

// Tape gradients of `loss_fn` with respect to `leaves`, compared with
// central differences. Returns max over leaves of ||g_tape - g_fd|| / max(||g_tape||, ||g_fd||).
inline double gradient_error(const std::vector<T64>& leaves, const std::function<T64()>& loss_fn,
                             double h = 1e-3) {
  for (auto leaf : leaves) leaf.zero_grad();
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(loss_fn());
  }
  double worst = 0;
  for (auto leaf : leaves) {
    std::vector<double> analytic(leaf.size(), 0.0);
    if (leaf.has_grad()) analytic.assign(leaf.grad().begin(), leaf.grad().end());
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < leaf.size(); ++i) {
      const double orig = leaf[i];
      leaf[i] = orig + h;
      const double up = loss_fn().item();
      leaf[i] = orig - h;
      const double down = loss_fn().item();
      leaf[i] = orig;
      const double numeric = (up - down) / (2 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    worst = std::max(worst, std::sqrt(diff2) / scale);
  }
  return worst;
}

// O(T^2) reference transform.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t f = 0; f < n; ++f) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((f * t) % n) /
                         static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[f] = acc;
  }
  return out;
}

struct NamedCheck {
  const char* name;
  std::function<double()> run;  // returns the relative gradient error
};

// One finite-difference check per differentiable primitive, on small random
// shapes in double precision.
inline std::vector<NamedCheck> primitive_gradient_checks() {
  std::vector<NamedCheck> checks;
  auto add_check = [&](const char* name, std::uint64_t seed, auto body) {
    checks.push_back({name, [seed, body] {
                        std::mt19937_64 rng(seed);
                        return body(rng);
                      }});
  };

  add_check("add", 1, [](std::mt19937_64& rng) {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    Projector p(11);
    return gradient_error({a, b}, [&] { return p(add(a, b)); });
  });
  add_check("sub", 2, [](std::mt19937_64& rng) {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    Projector p(12);
    return gradient_error({a, b}, [&] { return p(sub(a, b)); });
  });
  add_check("mul", 3, [](std::mt19937_64& rng) {
    auto a = random_tensor({2, 5}, rng), b = random_tensor({2, 5}, rng);
    Projector p(13);
    return gradient_error({a, b}, [&] { return p(mul(a, b)); });
  });
  add_check("scale", 4, [](std::mt19937_64& rng) {
    auto a = random_tensor({6}, rng);
    Projector p(14);
    return gradient_error({a}, [&] { return p(scale(a, 2.5)); });
  });
  add_check("add_bias", 5, [](std::mt19937_64& rng) {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
    Projector p(15);
    return gradient_error({a, b}, [&] { return p(add_bias(a, b)); });
  });
  add_check("gelu", 6, [](std::mt19937_64& rng) {
    auto a = random_tensor({10}, rng, true, -3, 3);
    Projector p(16);
    return gradient_error({a}, [&] { return p(gelu(a)); });
  });
  add_check("matmul", 7, [](std::mt19937_64& rng) {
    auto a = random_tensor({4, 3}, rng), b = random_tensor({3, 2}, rng);
    return gradient_error({a, b}, [&] { return sum(matmul(a, b)); });
  });
  add_check("gather", 8, [](std::mt19937_64& rng) {
    auto a = random_tensor({2, 3}, rng);
    auto idx = std::make_shared<std::vector<std::int64_t>>(
        std::vector<std::int64_t>{0, 5, -1, 2, 2, 4, -1, 1});
    Projector p(18);
    return gradient_error({a}, [&] { return p(gather(a, {2, 4}, idx)); });
  });
  add_check("reshape", 9, [](std::mt19937_64& rng) {
    auto a = random_tensor({2, 6}, rng);
    Projector p(19);
    return gradient_error({a}, [&] { return p(reshape(a, {3, 4})); });
  });
  add_check("transpose", 10, [](std::mt19937_64& rng) {
    auto a = random_tensor({2, 5}, rng);
    Projector p(20);
    return gradient_error({a}, [&] { return p(transpose(a)); });
  });
  add_check("slice_cols", 11, [](std::mt19937_64& rng) {
    auto a = random_tensor({3, 6}, rng);
    Projector p(21);
    return gradient_error({a}, [&] { return p(slice_cols(a, 2, 3)); });
  });
  add_check("select_row", 12, [](std::mt19937_64& rng) {
    auto a = random_tensor({4, 3}, rng);
    Projector p(22);
    return gradient_error({a}, [&] { return p(select_row(a, 2)); });
  });
  add_check("concat_axis0", 13, [](std::mt19937_64& rng) {
    auto a = random_tensor({2, 3}, rng), b = random_tensor({1, 3}, rng);
    Projector p(23);
    return gradient_error({a, b}, [&] { return p(concat<double>({a, b}, 0)); });
  });
  add_check("concat_axis1", 14, [](std::mt19937_64& rng) {
    auto a = random_tensor({2, 3}, rng), b = random_tensor({2, 2}, rng);
    Projector p(24);
    return gradient_error({a, b}, [&] { return p(concat<double>({a, b}, 1)); });
  });
  add_check("sum", 15, [](std::mt19937_64& rng) {
    auto a = random_tensor({2, 3}, rng);
    return gradient_error({a}, [&] { return scale(sum(mul(a, a)), 0.5); });
  });
  add_check("mean_rows", 16, [](std::mt19937_64& rng) {
    auto a = random_tensor({5, 3}, rng);
    Projector p(26);
    return gradient_error({a}, [&] { return p(mean_rows(a)); });
  });
  add_check("softmax_axis1", 17, [](std::mt19937_64& rng) {
    auto a = random_tensor({3, 4}, rng, true, -2, 2);
    Projector p(27);
    return gradient_error({a}, [&] { return p(softmax(a, 1)); });
  });
  add_check("softmax_axis0", 18, [](std::mt19937_64& rng) {
    auto a = random_tensor({3, 4}, rng, true, -2, 2);
    Projector p(28);
    return gradient_error({a}, [&] { return p(softmax(a, 0)); });
  });
  add_check("layer_norm", 19, [](std::mt19937_64& rng) {
    auto a = random_tensor({3, 6}, rng);
    auto g = random_tensor({6}, rng, true, 0.5, 1.5), b = random_tensor({6}, rng);
    Projector p(29);
    return gradient_error({a, g, b}, [&] { return p(layer_norm(a, g, b)); });
  });
  add_check("channel_norm", 20, [](std::mt19937_64& rng) {
    auto a = random_tensor({2, 2, 2, 3}, rng);
    auto g = random_tensor({2}, rng, true, 0.5, 1.5), b = random_tensor({2}, rng);
    Projector p(30);
    return gradient_error({a, g, b}, [&] { return p(channel_norm(a, g, b)); });
  });
  add_check("conv2d", 21, [](std::mt19937_64& rng) {
    auto x = random_tensor({1, 4, 4}, rng), k = random_tensor({1, 1, 3, 3}, rng);
    Projector p(31);
    return gradient_error({x, k}, [&] { return p(conv2d(x, k)); });
  });
  add_check("conv2d_multichannel_bias", 22, [](std::mt19937_64& rng) {
    auto x = random_tensor({2, 3, 5}, rng), k = random_tensor({3, 2, 3, 1}, rng);
    auto b = random_tensor({3}, rng);
    Projector p(32);
    return gradient_error({x, k, b}, [&] { return p(conv2d(x, k, &b)); });
  });
  add_check("conv3d", 23, [](std::mt19937_64& rng) {
    auto x = random_tensor({1, 3, 4, 4}, rng), k = random_tensor({1, 1, 3, 3, 3}, rng);
    Projector p(33);
    return gradient_error({x, k}, [&] { return p(conv3d(x, k)); });
  });
  add_check("conv3d_multichannel_bias", 24, [](std::mt19937_64& rng) {
    auto x = random_tensor({2, 2, 3, 2}, rng), k = random_tensor({2, 2, 1, 3, 3}, rng);
    auto b = random_tensor({2}, rng);
    Projector p(34);
    return gradient_error({x, k, b}, [&] { return p(conv3d(x, k, &b)); });
  });
  add_check("avg_pool3d", 25, [](std::mt19937_64& rng) {
    auto x = random_tensor({2, 2, 4, 2}, rng);
    Projector p(35);
    return gradient_error({x}, [&] { return p(avg_pool3d(x)); });
  });
  add_check("dropout", 26, [](std::mt19937_64& rng) {
    auto x = random_tensor({4, 5}, rng);
    Projector p(36);
    return gradient_error({x}, [&] {
      std::mt19937_64 mask_rng(99);
      return p(dropout(x, 0.3, &mask_rng));
    });
  });
  add_check("cross_entropy", 27, [](std::mt19937_64& rng) {
    auto z = random_tensor({3}, rng, true, -2, 2);
    return gradient_error({z}, [&] { return cross_entropy(z, 1); });
  });
  add_check("multi_head_attention", 28, [](std::mt19937_64& rng) {
    auto params = AttentionParams<double>::create(4, 2, rng);
    for (auto& v : params.bo.data()) v = 0.1;
    auto q = random_tensor({3, 4}, rng), c = random_tensor({5, 4}, rng);
    Projector p(38);
    return gradient_error({q, c, params.wq, params.wk, params.wv, params.wo, params.bo},
                          [&] { return p(multi_head_attention(q, c, params)); });
  });
  add_check("amplitudes_at", 29, [](std::mt19937_64& rng) {
    auto x = random_tensor({12, 2}, rng);
    Projector p(39);
    return gradient_error({x}, [&] { return p(temporal::amplitudes_at(x, {1, 3, 6})); });
  });
  return checks;
}

}  // namespace mstnet::oracles
