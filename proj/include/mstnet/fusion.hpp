#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mstnet/attention.hpp"
#include "mstnet/parameters.hpp"

namespace mstnet::fusion {

inline constexpr std::size_t kNumClasses = 3;

struct FusionOptions {
  std::size_t eeg_length = 128;     // T
  std::size_t eeg_channels = 8;     // C
  std::size_t volume_channels = 4;  // C' of the EEG-derived volume
  std::size_t volume_a = 4, volume_b = 4, volume_c = 4;
  std::size_t image_channels = 12;  // channels of the MRI feature map
  std::size_t tabular_width = 32;
  std::size_t width = 32;  // d_f
  std::size_t heads = 4;
  double dropout = 0.1;

  std::size_t volume_cells() const { return volume_a * volume_b * volume_c; }
};

template <typename Real>
struct ModalityFeatures {
  Tensor<Real> eeg_tokens;  // [N_e x d_f]
  Tensor<Real> mri_tokens;  // [N_m x d_f]
  Tensor<Real> tab_cls;     // [d_f]
};

// [C x spatial...] feature map -> [N x C] token matrix, one token per cell.
template <typename Real>
Tensor<Real> volume_to_tokens(const Tensor<Real>& v) {
  const std::size_t c = v.dim(0);
  return transpose(reshape(v, {c, v.size() / c}));
}

// Cross-modal attention aggregation and the 3-way classifier.
template <typename Real>
class FusionHead {
 public:
  FusionHead() = default;

  FusionHead(const FusionOptions& o, std::mt19937_64& rng) : options_(o) {
    const std::size_t tc = o.eeg_length * o.eeg_channels;
    const std::size_t vol = o.volume_channels * o.volume_cells();
    const std::size_t d = o.width;
    eeg3d_w_ = glorot<Real>({tc, vol}, tc, vol, rng);
    eeg3d_b_ = param_zeros<Real>({vol});
    eeg_proj_w_ = glorot<Real>({o.volume_channels, d}, o.volume_channels, d, rng);
    eeg_proj_b_ = param_zeros<Real>({d});
    mri_proj_w_ = glorot<Real>({o.image_channels, d}, o.image_channels, d, rng);
    mri_proj_b_ = param_zeros<Real>({d});
    tab_proj_w_ = glorot<Real>({o.tabular_width, d}, o.tabular_width, d, rng);
    tab_proj_b_ = param_zeros<Real>({d});
    eeg_queries_mri_ = AttentionParams<Real>::create(d, o.heads, rng);
    mri_queries_eeg_ = AttentionParams<Real>::create(d, o.heads, rng);
    agg_in_w_ = glorot<Real>({5 * d, d}, 5 * d, d, rng);
    agg_in_b_ = param_zeros<Real>({d});
    dense1_w_ = glorot<Real>({d, d}, d, d, rng);
    dense1_b_ = param_zeros<Real>({d});
    dense2_w_ = glorot<Real>({d, d}, d, d, rng);
    dense2_b_ = param_zeros<Real>({d});
    cls_w_ = glorot<Real>({d, kNumClasses}, d, kNumClasses, rng);
    cls_b_ = param_zeros<Real>({kNumClasses});
  }

  const FusionOptions& options() const { return options_; }
  bool cmaa_enabled() const { return cmaa_; }

  // Removes both cross-attention blocks; the aggregation input keeps only
  // the simple concatenation path and the tabular summary.
  void disable_cmaa() {
    if (!cmaa_) return;
    cmaa_ = false;
    eeg_queries_mri_ = {};
    mri_queries_eeg_ = {};
    const std::size_t d = options_.width;
    std::vector<Real> kept(agg_in_w_.values().begin() + 2 * d * d, agg_in_w_.values().end());
    agg_in_w_ = Tensor<Real>({3 * d, d}, std::move(kept), true);
  }

  // Learned linear map of the [T x C] series onto a C' x a x b x c volume.
  Tensor<Real> eeg_to_3d(const Tensor<Real>& x) const {
    const auto& o = options_;
    if (x.rank() != 2 || x.dim(0) != o.eeg_length || x.dim(1) != o.eeg_channels) {
      throw DimensionError("eeg_to_3d: expected [" + std::to_string(o.eeg_length) + "x" +
                           std::to_string(o.eeg_channels) + "], got " + shape_str(x.shape()));
    }
    return reshape(linear_vec(reshape(x, {x.size()}), eeg3d_w_, eeg3d_b_),
                   {o.volume_channels, o.volume_a, o.volume_b, o.volume_c});
  }

  ModalityFeatures<Real> project(const Tensor<Real>& eeg_volume, const Tensor<Real>& mri_map,
                                 const Tensor<Real>& tab_cls) const {
    if (mri_map.dim(0) != options_.image_channels) {
      throw DimensionError("fusion: MRI map " + shape_str(mri_map.shape()) + " has " +
                           std::to_string(mri_map.dim(0)) + " channels, expected " +
                           std::to_string(options_.image_channels));
    }
    return {linear(volume_to_tokens(eeg_volume), eeg_proj_w_, eeg_proj_b_),
            linear(volume_to_tokens(mri_map), mri_proj_w_, mri_proj_b_),
            linear_vec(tab_cls, tab_proj_w_, tab_proj_b_)};
  }

  Tensor<Real> cross_attention(const Tensor<Real>& queries, const Tensor<Real>& context,
                               bool eeg_queries,
                               std::vector<Tensor<Real>>* weights = nullptr) const {
    if (!cmaa_) throw ConfigError("cross-attention blocks are disabled");
    return multi_head_attention(queries, context,
                                eeg_queries ? eeg_queries_mri_ : mri_queries_eeg_, weights);
  }

  // Attended + simple pooled features and the tabular summary, through two
  // residual dense layers, to 3 logits. `rng` non-null enables dropout.
  Tensor<Real> aggregate_and_classify(const ModalityFeatures<Real>& f,
                                      std::mt19937_64* rng = nullptr) const {
    const Real p = static_cast<Real>(options_.dropout);
    std::vector<Tensor<Real>> parts;
    if (cmaa_) {
      parts.push_back(mean_rows(cross_attention(f.eeg_tokens, f.mri_tokens, true)));
      parts.push_back(mean_rows(cross_attention(f.mri_tokens, f.eeg_tokens, false)));
    }
    parts.push_back(mean_rows(f.eeg_tokens));
    parts.push_back(mean_rows(f.mri_tokens));
    parts.push_back(f.tab_cls);
    const Tensor<Real> z = concat(parts, 0);
    Tensor<Real> h = linear_vec(z, agg_in_w_, agg_in_b_);
    h = add(h, dropout(gelu(linear_vec(h, dense1_w_, dense1_b_)), p, rng));
    h = add(h, dropout(gelu(linear_vec(h, dense2_w_, dense2_b_)), p, rng));
    return linear_vec(h, cls_w_, cls_b_);
  }

  // Aggregation and classifier tensors, for tests that pin them.
  std::vector<Tensor<Real>*> aggregation_tensors() {
    return {&agg_in_w_, &agg_in_b_, &dense1_w_, &dense1_b_, &dense2_w_, &dense2_b_};
  }
  Tensor<Real>& classifier_weight() { return cls_w_; }
  Tensor<Real>& classifier_bias() { return cls_b_; }
  Tensor<Real>& eeg3d_bias() { return eeg3d_b_; }
  AttentionParams<Real>& eeg_queries_mri() { return eeg_queries_mri_; }

  void collect(const std::string& prefix, ParameterList<Real>& out) const {
    out.push_back({prefix + ".eeg3d_w", eeg3d_w_});
    out.push_back({prefix + ".eeg3d_b", eeg3d_b_});
    out.push_back({prefix + ".eeg_proj_w", eeg_proj_w_});
    out.push_back({prefix + ".eeg_proj_b", eeg_proj_b_});
    out.push_back({prefix + ".mri_proj_w", mri_proj_w_});
    out.push_back({prefix + ".mri_proj_b", mri_proj_b_});
    out.push_back({prefix + ".tab_proj_w", tab_proj_w_});
    out.push_back({prefix + ".tab_proj_b", tab_proj_b_});
    if (cmaa_) {
      eeg_queries_mri_.collect(prefix + ".eeg_queries_mri", out);
      mri_queries_eeg_.collect(prefix + ".mri_queries_eeg", out);
    }
    out.push_back({prefix + ".agg_in_w", agg_in_w_});
    out.push_back({prefix + ".agg_in_b", agg_in_b_});
    out.push_back({prefix + ".dense1_w", dense1_w_});
    out.push_back({prefix + ".dense1_b", dense1_b_});
    out.push_back({prefix + ".dense2_w", dense2_w_});
    out.push_back({prefix + ".dense2_b", dense2_b_});
    out.push_back({prefix + ".cls_w", cls_w_});
    out.push_back({prefix + ".cls_b", cls_b_});
  }

 private:
  FusionOptions options_;
  bool cmaa_ = true;
  Tensor<Real> eeg3d_w_, eeg3d_b_;
  Tensor<Real> eeg_proj_w_, eeg_proj_b_, mri_proj_w_, mri_proj_b_, tab_proj_w_, tab_proj_b_;
  AttentionParams<Real> eeg_queries_mri_, mri_queries_eeg_;
  Tensor<Real> agg_in_w_, agg_in_b_, dense1_w_, dense1_b_, dense2_w_, dense2_b_;
  Tensor<Real> cls_w_, cls_b_;
};

}  // namespace mstnet::fusion
