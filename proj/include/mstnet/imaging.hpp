#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mstnet/parameters.hpp"

namespace mstnet::imaging {

struct DenseBlockOptions {
  std::size_t in_channels = 1;
  std::size_t growth = 8;
  std::size_t layers_per_block = 2;
  std::size_t blocks = 2;
};

// Channel bookkeeping shared by the encoder and its substitutes.
inline std::size_t transition_channels(std::size_t c) { return std::max<std::size_t>(1, c / 2); }

inline std::size_t output_channels(const DenseBlockOptions& o) {
  std::size_t c = o.in_channels;
  for (std::size_t b = 0; b < o.blocks; ++b) {
    c = transition_channels(c + o.layers_per_block * o.growth);
  }
  return c;
}

inline void check_extents(const Shape& shape, std::size_t blocks) {
  const std::size_t div = std::size_t{1} << blocks;
  if (shape.size() != 4) throw DimensionError("imaging: expected [C x D x H x W], got " + shape_str(shape));
  for (std::size_t i = 1; i < 4; ++i) {
    if (shape[i] < div || shape[i] % div != 0) {
      throw DimensionError("imaging: volume " + shape_str(shape) + " too small for " +
                           std::to_string(blocks) + " downsamplings (extents must be multiples of " +
                           std::to_string(div) + ")");
    }
  }
}

template <typename Real>
struct DenseLayer {
  Tensor<Real> norm_gain, norm_bias, kernel, bias;
};

template <typename Real>
struct Transition {
  Tensor<Real> kernel, bias;
};

// DenseNet-style 3D encoder: each layer norm -> GELU -> 3^3 conv and
// appends `growth` channels; each block ends in a 1^3 conv halving the
// channels and a 2^3 average pool.
template <typename Real>
class DenseEncoder {
 public:
  DenseEncoder() = default;

  DenseEncoder(const DenseBlockOptions& o, std::mt19937_64& rng) : options_(o) {
    std::size_t c = o.in_channels;
    for (std::size_t b = 0; b < o.blocks; ++b) {
      std::vector<DenseLayer<Real>> layers;
      for (std::size_t l = 0; l < o.layers_per_block; ++l) {
        DenseLayer<Real> layer;
        layer.norm_gain = param_ones<Real>({c});
        layer.norm_bias = param_zeros<Real>({c});
        layer.kernel = glorot<Real>({o.growth, c, 3, 3, 3}, c * 27, o.growth * 27, rng);
        layer.bias = param_zeros<Real>({o.growth});
        layers.push_back(std::move(layer));
        c += o.growth;
      }
      blocks_.push_back(std::move(layers));
      const std::size_t out = transition_channels(c);
      transitions_.push_back({glorot<Real>({out, c, 1, 1, 1}, c, out, rng), param_zeros<Real>({out})});
      c = out;
    }
  }

  const DenseBlockOptions& options() const { return options_; }
  std::vector<std::vector<DenseLayer<Real>>>& blocks() { return blocks_; }
  std::vector<Transition<Real>>& transitions() { return transitions_; }

  // Dense block `b` without its transition: [C x ...] -> [C + n_l*g x ...].
  Tensor<Real> dense_block(const Tensor<Real>& x, std::size_t b) const {
    Tensor<Real> h = x;
    for (const auto& layer : blocks_.at(b)) {
      const Tensor<Real> y =
          conv3d(gelu(channel_norm(h, layer.norm_gain, layer.norm_bias)), layer.kernel, &layer.bias);
      h = concat(std::vector<Tensor<Real>>{h, y}, 0);
    }
    return h;
  }

  Tensor<Real> transition(const Tensor<Real>& x, std::size_t b) const {
    const auto& t = transitions_.at(b);
    return avg_pool3d(conv3d(x, t.kernel, &t.bias));
  }

  Tensor<Real> forward(const Tensor<Real>& x) const {
    check_extents(x.shape(), blocks_.size());
    if (x.dim(0) != options_.in_channels) {
      throw DimensionError("dense encoder: expected " + std::to_string(options_.in_channels) +
                           " input channels, got " + shape_str(x.shape()));
    }
    Tensor<Real> h = x;
    for (std::size_t b = 0; b < blocks_.size(); ++b) h = transition(dense_block(h, b), b);
    return h;
  }

  void collect(const std::string& prefix, ParameterList<Real>& out) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const std::string pb = prefix + ".block" + std::to_string(b);
      for (std::size_t l = 0; l < blocks_[b].size(); ++l) {
        const auto& layer = blocks_[b][l];
        const std::string p = pb + ".layer" + std::to_string(l);
        out.push_back({p + ".norm_gain", layer.norm_gain});
        out.push_back({p + ".norm_bias", layer.norm_bias});
        out.push_back({p + ".kernel", layer.kernel});
        out.push_back({p + ".bias", layer.bias});
      }
      out.push_back({pb + ".transition.kernel", transitions_[b].kernel});
      out.push_back({pb + ".transition.bias", transitions_[b].bias});
    }
  }

 private:
  DenseBlockOptions options_;
  std::vector<std::vector<DenseLayer<Real>>> blocks_;
  std::vector<Transition<Real>> transitions_;
};

// Replacement for the dense encoder: one conv3d with kernel = stride =
// 2^blocks, producing the same output geometry in a single projection.
template <typename Real>
class StridedProjection {
 public:
  StridedProjection() = default;

  StridedProjection(const DenseBlockOptions& o, std::mt19937_64& rng)
      : options_(o), stride_(std::size_t{1} << o.blocks), out_channels_(output_channels(o)) {
    const std::size_t fan_in = o.in_channels * stride_ * stride_ * stride_;
    weight_ = glorot<Real>({fan_in, out_channels_}, fan_in, out_channels_, rng);
    bias_ = param_zeros<Real>({out_channels_});
  }

  Tensor<Real> forward(const Tensor<Real>& x) const {
    check_extents(x.shape(), options_.blocks);
    const std::size_t C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3), s = stride_;
    const std::size_t d = D / s, h = H / s, w = W / s;
    const std::size_t patch = C * s * s * s;
    auto index = std::make_shared<std::vector<std::int64_t>>(d * h * w * patch);
    std::size_t k = 0;
    for (std::size_t z = 0; z < d; ++z)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t a = 0; a < s; ++a)
              for (std::size_t b = 0; b < s; ++b)
                for (std::size_t e = 0; e < s; ++e)
                  (*index)[k++] = static_cast<std::int64_t>(
                      ((c * D + z * s + a) * H + y * s + b) * W + xx * s + e);
    const Tensor<Real> patches = gather(x, {d * h * w, patch}, std::move(index));
    return reshape(transpose(linear(patches, weight_, bias_)), {out_channels_, d, h, w});
  }

  void collect(const std::string& prefix, ParameterList<Real>& out) const {
    out.push_back({prefix + ".weight", weight_});
    out.push_back({prefix + ".bias", bias_});
  }

 private:
  DenseBlockOptions options_;
  std::size_t stride_ = 1;
  std::size_t out_channels_ = 1;
  Tensor<Real> weight_, bias_;
};

}  // namespace mstnet::imaging
