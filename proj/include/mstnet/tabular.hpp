#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mstnet/attention.hpp"
#include "mstnet/parameters.hpp"

namespace mstnet::tabular {

struct CategoricalField {
  std::string name;
  std::vector<std::string> vocabulary;  // index = category code

  std::size_t cardinality() const { return vocabulary.size(); }
};

struct TabularSchema {
  std::vector<std::string> numerical;
  std::vector<CategoricalField> categorical;

  std::size_t feature_count() const { return numerical.size() + categorical.size(); }
  std::size_t token_count() const { return feature_count() + 1; }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& n : numerical) {
      if (!seen.insert(n).second) throw ConfigError("duplicate tabular field '" + n + "'");
    }
    for (const auto& c : categorical) {
      if (!seen.insert(c.name).second) {
        throw ConfigError("duplicate tabular field '" + c.name + "'");
      }
      if (c.cardinality() < 2) {
        throw ConfigError("categorical field '" + c.name + "' needs >= 2 categories");
      }
    }
  }

  bool operator==(const TabularSchema& o) const {
    if (numerical != o.numerical || categorical.size() != o.categorical.size()) return false;
    for (std::size_t i = 0; i < categorical.size(); ++i) {
      if (categorical[i].name != o.categorical[i].name ||
          categorical[i].vocabulary != o.categorical[i].vocabulary) {
        return false;
      }
    }
    return true;
  }
};

struct TabularRecord {
  std::vector<double> numerical;
  std::vector<std::size_t> categorical;  // category codes
};

// Per-field embeddings: numerical token = b + x * W, categorical token =
// b + W[category]; a learnable CLS token is appended last.
template <typename Real>
class FeatureTokenizer {
 public:
  FeatureTokenizer() = default;

  FeatureTokenizer(const TabularSchema& schema, std::size_t width,
                   std::mt19937_64& rng)
      : schema_(schema), width_(width) {
    schema_.validate();
    const std::size_t kn = schema_.numerical.size();
    const std::size_t kc = schema_.categorical.size();
    if (kn) {
      w_num_ = glorot<Real>({kn, width}, 1, width, rng);
      b_num_ = glorot<Real>({kn, width}, 1, width, rng);
    }
    for (const auto& f : schema_.categorical) {
      w_cat_.push_back(glorot<Real>({f.cardinality(), width}, f.cardinality(), width, rng));
    }
    if (kc) b_cat_ = glorot<Real>({kc, width}, 1, width, rng);
    cls_ = glorot<Real>({1, width}, 1, width, rng);
  }

  std::size_t width() const { return width_; }
  bool biases_enabled() const { return biases_enabled_; }
  const TabularSchema& schema() const { return schema_; }

  Tensor<Real>& numerical_weight() { return w_num_; }
  Tensor<Real>& numerical_bias() { return b_num_; }
  Tensor<Real>& categorical_table(std::size_t j) { return w_cat_.at(j); }
  Tensor<Real>& categorical_bias() { return b_cat_; }
  Tensor<Real>& cls_token() { return cls_; }

  // Fixes every feature bias at zero and drops it from the trainable set.
  void disable_feature_biases() {
    biases_enabled_ = false;
    for (Tensor<Real>* b : {&b_num_, &b_cat_}) {
      if (!b->defined()) continue;
      *b = Tensor<Real>(b->shape(), false);
    }
  }

  // [(k_num + k_cat + 1) x d]: numerical tokens, categorical tokens, CLS.
  Tensor<Real> tokenize(const TabularRecord& record) const {
    const std::size_t kn = schema_.numerical.size();
    const std::size_t kc = schema_.categorical.size();
    if (record.numerical.size() != kn) {
      const std::size_t missing = std::min(record.numerical.size(), kn);
      throw DimensionError(
          "tokenize: expected " + std::to_string(kn) + " numerical fields, got " +
          std::to_string(record.numerical.size()) +
          (missing < kn ? " (missing '" + schema_.numerical[missing] + "')" : ""));
    }
    if (record.categorical.size() != kc) {
      const std::size_t missing = std::min(record.categorical.size(), kc);
      throw DimensionError(
          "tokenize: expected " + std::to_string(kc) + " categorical fields, got " +
          std::to_string(record.categorical.size()) +
          (missing < kc ? " (missing '" + schema_.categorical[missing].name + "')" : ""));
    }
    std::vector<Tensor<Real>> parts;
    if (kn) {
      Tensor<Real> xs({kn, width_});
      for (std::size_t j = 0; j < kn; ++j) {
        for (std::size_t i = 0; i < width_; ++i) {
          xs[j * width_ + i] = static_cast<Real>(record.numerical[j]);
        }
      }
      Tensor<Real> t = mul(w_num_, xs);
      if (biases_enabled_) t = add(t, b_num_);
      parts.push_back(t);
    }
    if (kc) {
      std::vector<Tensor<Real>> rows;
      for (std::size_t j = 0; j < kc; ++j) {
        const std::size_t code = record.categorical[j];
        const auto& field = schema_.categorical[j];
        if (code >= field.cardinality()) {
          throw DimensionError("tokenize: category " + std::to_string(code) +
                               " out of range for '" + field.name + "' (" +
                               std::to_string(field.cardinality()) + " values)");
        }
        auto index = std::make_shared<std::vector<std::int64_t>>(width_);
        for (std::size_t i = 0; i < width_; ++i) {
          (*index)[i] = static_cast<std::int64_t>(code * width_ + i);
        }
        rows.push_back(gather(w_cat_[j], {1, width_}, std::move(index)));
      }
      Tensor<Real> t = rows.size() == 1 ? rows.front() : concat(rows, 0);
      if (biases_enabled_) t = add(t, b_cat_);
      parts.push_back(t);
    }
    parts.push_back(cls_);
    return concat(parts, 0);
  }

  void collect(const std::string& prefix, ParameterList<Real>& out) const {
    if (w_num_.defined()) out.push_back({prefix + ".w_num", w_num_});
    if (biases_enabled_ && b_num_.defined()) out.push_back({prefix + ".b_num", b_num_});
    for (std::size_t j = 0; j < w_cat_.size(); ++j) {
      out.push_back({prefix + ".w_cat." + schema_.categorical[j].name, w_cat_[j]});
    }
    if (biases_enabled_ && b_cat_.defined()) out.push_back({prefix + ".b_cat", b_cat_});
    out.push_back({prefix + ".cls", cls_});
  }

 private:
  TabularSchema schema_;
  std::size_t width_ = 0;
  bool biases_enabled_ = true;
  Tensor<Real> w_num_, b_num_, b_cat_, cls_;
  std::vector<Tensor<Real>> w_cat_;
};

template <typename Real>
struct EncoderLayer {
  Tensor<Real> ln1_gain, ln1_bias;  // undefined when the norm is removed
  AttentionParams<Real> attention;
  Tensor<Real> ln2_gain, ln2_bias;
  Tensor<Real> w1, b1, w2, b2;
};

struct EncoderOptions {
  std::size_t width = 32;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_width = 64;
  double dropout = 0.1;
  // Skip the normalization in front of the first attention sub-block.
  bool remove_first_norm = true;
};

// PreNorm transformer over the token matrix; returns the final CLS row.
template <typename Real>
class TabularEncoder {
 public:
  TabularEncoder() = default;

  TabularEncoder(const EncoderOptions& options, std::mt19937_64& rng)
      : options_(options) {
    if (options.layers < 1) throw ConfigError("tabular encoder needs >= 1 layer");
    const std::size_t d = options.width;
    for (std::size_t l = 0; l < options.layers; ++l) {
      EncoderLayer<Real> layer;
      if (!(l == 0 && options.remove_first_norm)) {
        layer.ln1_gain = param_ones<Real>({d});
        layer.ln1_bias = param_zeros<Real>({d});
      }
      layer.attention = AttentionParams<Real>::create(d, options.heads, rng);
      layer.ln2_gain = param_ones<Real>({d});
      layer.ln2_bias = param_zeros<Real>({d});
      layer.w1 = glorot<Real>({d, options.ff_width}, d, options.ff_width, rng);
      layer.b1 = param_zeros<Real>({options.ff_width});
      layer.w2 = glorot<Real>({options.ff_width, d}, options.ff_width, d, rng);
      layer.b2 = param_zeros<Real>({d});
      layers_.push_back(std::move(layer));
    }
  }

  std::vector<EncoderLayer<Real>>& layers() { return layers_; }
  const EncoderOptions& options() const { return options_; }

  // Full final-layer token matrix. `rng` non-null enables dropout.
  Tensor<Real> forward(const Tensor<Real>& tokens, std::mt19937_64* rng = nullptr,
                       std::vector<Tensor<Real>>* attention_weights = nullptr) const {
    const Real p = static_cast<Real>(options_.dropout);
    Tensor<Real> x = tokens;
    for (const auto& layer : layers_) {
      const Tensor<Real> normed =
          layer.ln1_gain.defined() ? layer_norm(x, layer.ln1_gain, layer.ln1_bias) : x;
      x = add(x, dropout(multi_head_attention(normed, normed, layer.attention,
                                              attention_weights),
                         p, rng));
      const Tensor<Real> h = layer_norm(x, layer.ln2_gain, layer.ln2_bias);
      const Tensor<Real> ff = linear(gelu(linear(h, layer.w1, layer.b1)), layer.w2, layer.b2);
      x = add(x, dropout(ff, p, rng));
    }
    return x;
  }

  Tensor<Real> encode(const Tensor<Real>& tokens, std::mt19937_64* rng = nullptr,
                      std::vector<Tensor<Real>>* attention_weights = nullptr) const {
    const Tensor<Real> out = forward(tokens, rng, attention_weights);
    return select_row(out, out.dim(0) - 1);
  }

  void collect(const std::string& prefix, ParameterList<Real>& out) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      const std::string p = prefix + ".layer" + std::to_string(l);
      if (layer.ln1_gain.defined()) {
        out.push_back({p + ".ln1_gain", layer.ln1_gain});
        out.push_back({p + ".ln1_bias", layer.ln1_bias});
      }
      layer.attention.collect(p + ".attn", out);
      out.push_back({p + ".ln2_gain", layer.ln2_gain});
      out.push_back({p + ".ln2_bias", layer.ln2_bias});
      out.push_back({p + ".w1", layer.w1});
      out.push_back({p + ".b1", layer.b1});
      out.push_back({p + ".w2", layer.w2});
      out.push_back({p + ".b2", layer.b2});
    }
  }

 private:
  EncoderOptions options_;
  std::vector<EncoderLayer<Real>> layers_;
};

}  // namespace mstnet::tabular
