#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mstnet/errors.hpp"

namespace mstnet {

// Every model dimension, training hyperparameter and ablation switch.
// Serialized into checkpoints; the hash identifies a run configuration.
struct ModelConfig {
  // tabular encoder
  std::size_t d_model = 32;
  std::size_t tab_layers = 2;
  std::size_t tab_heads = 4;
  std::size_t tab_ff_width = 64;
  // temporal encoder
  std::size_t k_top = 3;
  std::size_t times_blocks = 2;
  std::vector<std::size_t> inception_kernels{1, 3, 5};
  bool amplitude_gradient = false;  // differentiate through aggregation weights
  // imaging encoder
  std::size_t dense_growth = 8;
  std::size_t dense_layers = 2;
  std::size_t dense_blocks = 2;
  // fusion head
  std::size_t fusion_width = 32;
  std::size_t fusion_heads = 4;
  std::size_t eeg_volume_channels = 4;
  std::size_t eeg_volume_a = 4;
  std::size_t eeg_volume_b = 4;
  std::size_t eeg_volume_c = 4;
  // training
  double learning_rate = 1e-4;
  double dropout = 0.1;
  std::size_t epochs = 200;
  std::size_t batch_size = 100;  // capped at the training split size
  std::uint64_t seed = 1;
  // ablations
  bool no_denseblock = false;
  bool no_timesblock = false;
  bool no_cmaa = false;
  bool no_feature_biases = false;

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(d_model, "d_model");
    positive(tab_layers, "tab_layers");
    positive(tab_heads, "tab_heads");
    positive(tab_ff_width, "tab_ff_width");
    positive(k_top, "k_top");
    positive(dense_growth, "dense_growth");
    positive(dense_layers, "dense_layers");
    positive(dense_blocks, "dense_blocks");
    positive(fusion_width, "fusion_width");
    positive(fusion_heads, "fusion_heads");
    positive(eeg_volume_channels, "eeg_volume_channels");
    positive(eeg_volume_a, "eeg_volume_a");
    positive(eeg_volume_b, "eeg_volume_b");
    positive(eeg_volume_c, "eeg_volume_c");
    positive(epochs, "epochs");
    positive(batch_size, "batch_size");
    if (d_model % tab_heads != 0) {
      throw ConfigError("d_model (" + std::to_string(d_model) + ") not divisible by tab_heads (" +
                        std::to_string(tab_heads) + ")");
    }
    if (fusion_width % fusion_heads != 0) {
      throw ConfigError("fusion_width (" + std::to_string(fusion_width) +
                        ") not divisible by fusion_heads (" + std::to_string(fusion_heads) + ")");
    }
    if (inception_kernels.empty()) throw ConfigError("inception_kernels is empty");
    for (std::size_t k : inception_kernels) {
      if (k % 2 == 0) throw ConfigError("inception kernel sizes must be odd");
    }
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0, 1)");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{
      {"d_model", c.d_model},
      {"tab_layers", c.tab_layers},
      {"tab_heads", c.tab_heads},
      {"tab_ff_width", c.tab_ff_width},
      {"k_top", c.k_top},
      {"times_blocks", c.times_blocks},
      {"inception_kernels", c.inception_kernels},
      {"amplitude_gradient", c.amplitude_gradient},
      {"dense_growth", c.dense_growth},
      {"dense_layers", c.dense_layers},
      {"dense_blocks", c.dense_blocks},
      {"fusion_width", c.fusion_width},
      {"fusion_heads", c.fusion_heads},
      {"eeg_volume_channels", c.eeg_volume_channels},
      {"eeg_volume_a", c.eeg_volume_a},
      {"eeg_volume_b", c.eeg_volume_b},
      {"eeg_volume_c", c.eeg_volume_c},
      {"learning_rate", c.learning_rate},
      {"dropout", c.dropout},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"no_denseblock", c.no_denseblock},
      {"no_timesblock", c.no_timesblock},
      {"no_cmaa", c.no_cmaa},
      {"no_feature_biases", c.no_feature_biases},
  };
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace detail

// Applies the keys present in `j` on top of `c`. Unknown keys are errors.
inline void apply_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a key-value object");
  const nlohmann::json known = c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  }
  nlohmann::json merged = known;
  for (auto it = j.begin(); it != j.end(); ++it) merged[it.key()] = it.value();
  ModelConfig out;
  detail::read_field(merged, "d_model", out.d_model);
  detail::read_field(merged, "tab_layers", out.tab_layers);
  detail::read_field(merged, "tab_heads", out.tab_heads);
  detail::read_field(merged, "tab_ff_width", out.tab_ff_width);
  detail::read_field(merged, "k_top", out.k_top);
  detail::read_field(merged, "times_blocks", out.times_blocks);
  detail::read_field(merged, "inception_kernels", out.inception_kernels);
  detail::read_field(merged, "amplitude_gradient", out.amplitude_gradient);
  detail::read_field(merged, "dense_growth", out.dense_growth);
  detail::read_field(merged, "dense_layers", out.dense_layers);
  detail::read_field(merged, "dense_blocks", out.dense_blocks);
  detail::read_field(merged, "fusion_width", out.fusion_width);
  detail::read_field(merged, "fusion_heads", out.fusion_heads);
  detail::read_field(merged, "eeg_volume_channels", out.eeg_volume_channels);
  detail::read_field(merged, "eeg_volume_a", out.eeg_volume_a);
  detail::read_field(merged, "eeg_volume_b", out.eeg_volume_b);
  detail::read_field(merged, "eeg_volume_c", out.eeg_volume_c);
  detail::read_field(merged, "learning_rate", out.learning_rate);
  detail::read_field(merged, "dropout", out.dropout);
  detail::read_field(merged, "epochs", out.epochs);
  detail::read_field(merged, "batch_size", out.batch_size);
  detail::read_field(merged, "seed", out.seed);
  detail::read_field(merged, "no_denseblock", out.no_denseblock);
  detail::read_field(merged, "no_timesblock", out.no_timesblock);
  detail::read_field(merged, "no_cmaa", out.no_cmaa);
  detail::read_field(merged, "no_feature_biases", out.no_feature_biases);
  c = out;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  apply_json(j, c);
  c.validate();
  return c;
}

inline ModelConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

// Sets one key from its command-line text form, e.g. ("k_top", "2") or
// ("inception_kernels", "1,3").
inline void set_config_value(ModelConfig& c, const std::string& key, const std::string& text) {
  const nlohmann::json current = c;
  if (!current.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  const auto& slot = current.at(key);
  nlohmann::json value;
  try {
    if (slot.is_boolean()) {
      if (text == "true" || text == "1") value = true;
      else if (text == "false" || text == "0") value = false;
      else throw ConfigError("config key '" + key + "' expects true/false, got '" + text + "'");
    } else if (slot.is_array()) {
      value = nlohmann::json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) value.push_back(std::stoull(item));
    } else if (slot.is_number_float()) {
      value = std::stod(text);
    } else {
      if (!text.empty() && text[0] == '-') throw ConfigError("config key '" + key + "' must be non-negative");
      value = std::stoull(text);
    }
  } catch (const std::logic_error&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  apply_json(nlohmann::json{{key, value}}, c);
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(const ModelConfig& c) {
  const nlohmann::json j = c;
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(j.dump());
  return os.str();
}

}  // namespace mstnet
