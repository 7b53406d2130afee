#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mstnet/config.hpp"
#include "mstnet/fusion.hpp"
#include "mstnet/imaging.hpp"
#include "mstnet/sample.hpp"
#include "mstnet/tabular.hpp"
#include "mstnet/temporal.hpp"

namespace mstnet {

// Full multimodal classifier: tabular tokens -> transformer CLS, EEG ->
// TimesBlocks -> 3D volume, MRI -> dense 3D encoder, then cross-modal
// attention aggregation to three logits.
template <typename Real>
class MstNet {
 public:
  MstNet(const ModelConfig& config, const tabular::TabularSchema& schema, const DataDims& dims,
         NormalizationStats stats)
      : config_(config), schema_(schema), dims_(dims), stats_(std::move(stats)) {
    config_.validate();
    if (stats_.mean.size() != schema_.numerical.size() ||
        stats_.stddev.size() != schema_.numerical.size()) {
      throw ConfigError("normalization statistics do not match the tabular schema");
    }
    if (config_.k_top > dims.eeg_length / 2) {
      throw ConfigError("k_top " + std::to_string(config_.k_top) + " exceeds T/2 = " +
                        std::to_string(dims.eeg_length / 2));
    }
    // Independent streams per component, so ablations leave the remaining
    // components' initialization unchanged.
    auto stream = [&](std::uint64_t k) { return std::mt19937_64(config_.seed * 1000003ull + k); };

    auto r0 = stream(0);
    tokenizer_ = tabular::FeatureTokenizer<Real>(schema_, config_.d_model, r0);
    if (config_.no_feature_biases) tokenizer_.disable_feature_biases();

    auto r1 = stream(1);
    tabular::EncoderOptions eo;
    eo.width = config_.d_model;
    eo.layers = config_.tab_layers;
    eo.heads = config_.tab_heads;
    eo.ff_width = config_.tab_ff_width;
    eo.dropout = config_.dropout;
    encoder_ = tabular::TabularEncoder<Real>(eo, r1);

    auto r2 = stream(2);
    temporal_ = temporal::TemporalEncoder<Real>(dims.eeg_channels,
                                                config_.no_timesblock ? 0 : config_.times_blocks,
                                                config_.inception_kernels, config_.k_top, r2,
                                                config_.amplitude_gradient);

    auto r3 = stream(3);
    imaging::DenseBlockOptions io;
    io.in_channels = 1;
    io.growth = config_.dense_growth;
    io.layers_per_block = config_.dense_layers;
    io.blocks = config_.dense_blocks;
    imaging::check_extents({1, dims.depth, dims.height, dims.width}, io.blocks);
    if (config_.no_denseblock) {
      projection_ = imaging::StridedProjection<Real>(io, r3);
    } else {
      dense_ = imaging::DenseEncoder<Real>(io, r3);
    }

    auto r4 = stream(4);
    fusion::FusionOptions fo;
    fo.eeg_length = dims.eeg_length;
    fo.eeg_channels = dims.eeg_channels;
    fo.volume_channels = config_.eeg_volume_channels;
    fo.volume_a = config_.eeg_volume_a;
    fo.volume_b = config_.eeg_volume_b;
    fo.volume_c = config_.eeg_volume_c;
    fo.image_channels = imaging::output_channels(io);
    fo.tabular_width = config_.d_model;
    fo.width = config_.fusion_width;
    fo.heads = config_.fusion_heads;
    fo.dropout = config_.dropout;
    fusion_ = fusion::FusionHead<Real>(fo, r4);
    // Small classifier init keeps the initial logits near uniform.
    for (auto& v : fusion_.classifier_weight().data()) v *= Real(0.1);
    if (config_.no_cmaa) fusion_.disable_cmaa();
  }

  const ModelConfig& config() const { return config_; }
  const tabular::TabularSchema& schema() const { return schema_; }
  const DataDims& dims() const { return dims_; }
  const NormalizationStats& stats() const { return stats_; }

  tabular::FeatureTokenizer<Real>& tokenizer() { return tokenizer_; }
  tabular::TabularEncoder<Real>& encoder() { return encoder_; }
  temporal::TemporalEncoder<Real>& temporal() { return temporal_; }
  fusion::FusionHead<Real>& fusion() { return fusion_; }

  // Trainable tensors in a fixed declaration order (checkpoint order).
  ParameterList<Real> parameters() const {
    ParameterList<Real> out;
    tokenizer_.collect("tokenizer", out);
    encoder_.collect("encoder", out);
    temporal_.collect("temporal", out);
    if (config_.no_denseblock) {
      projection_.collect("imaging_proj", out);
    } else {
      dense_.collect("imaging", out);
    }
    fusion_.collect("fusion", out);
    return out;
  }

  tabular::TabularRecord normalize(const tabular::TabularRecord& r) const {
    tabular::TabularRecord out = r;
    for (std::size_t j = 0; j < out.numerical.size() && j < stats_.mean.size(); ++j) {
      out.numerical[j] = (out.numerical[j] - stats_.mean[j]) / stats_.stddev[j];
    }
    return out;
  }

  Tensor<Real> eeg_tensor(const Sample& s) const {
    if (s.eeg.size() != dims_.eeg_length * dims_.eeg_channels) {
      throw DimensionError("sample " + s.id + ": EEG has " + std::to_string(s.eeg.size()) +
                           " values, model expects " +
                           std::to_string(dims_.eeg_length * dims_.eeg_channels));
    }
    return Tensor<Real>({dims_.eeg_length, dims_.eeg_channels},
                        std::vector<Real>(s.eeg.begin(), s.eeg.end()));
  }

  // Single-channel volume standardized to zero mean and unit variance.
  Tensor<Real> volume_tensor(const Sample& s) const {
    if (s.volume.size() != dims_.volume_size()) {
      throw DimensionError("sample " + s.id + ": volume has " + std::to_string(s.volume.size()) +
                           " voxels, model expects " + std::to_string(dims_.volume_size()));
    }
    double mean = 0, var = 0;
    for (float v : s.volume) mean += v;
    mean /= static_cast<double>(s.volume.size());
    for (float v : s.volume) var += (v - mean) * (v - mean);
    var /= static_cast<double>(s.volume.size());
    const double inv = var > 0 ? 1.0 / std::sqrt(var) : 1.0;
    std::vector<Real> vals(s.volume.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      vals[i] = static_cast<Real>((s.volume[i] - mean) * inv);
    }
    return Tensor<Real>({1, dims_.depth, dims_.height, dims_.width}, std::move(vals));
  }

  Tensor<Real> spatial_features(const Tensor<Real>& volume) const {
    return config_.no_denseblock ? projection_.forward(volume) : dense_.forward(volume);
  }

  // Three class logits. A non-null `rng` switches on dropout (training).
  Tensor<Real> logits(const Sample& s, std::mt19937_64* rng = nullptr) const {
    const Tensor<Real> tokens = tokenizer_.tokenize(normalize(s.tabular));
    const Tensor<Real> cls = encoder_.encode(tokens, rng);
    const Tensor<Real> eeg_volume = fusion_.eeg_to_3d(temporal_.forward(eeg_tensor(s)));
    const Tensor<Real> mri_map = spatial_features(volume_tensor(s));
    return fusion_.aggregate_and_classify(fusion_.project(eeg_volume, mri_map, cls), rng);
  }

  std::size_t predict(const Sample& s) const {
    const Tensor<Real> z = logits(s);
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.size(); ++k) {
      if (z[k] > z[best]) best = k;
    }
    return best;
  }

 private:
  ModelConfig config_;
  tabular::TabularSchema schema_;
  DataDims dims_;
  NormalizationStats stats_;
  tabular::FeatureTokenizer<Real> tokenizer_;
  tabular::TabularEncoder<Real> encoder_;
  temporal::TemporalEncoder<Real> temporal_;
  imaging::DenseEncoder<Real> dense_;
  imaging::StridedProjection<Real> projection_;
  fusion::FusionHead<Real> fusion_;
};

}  // namespace mstnet
