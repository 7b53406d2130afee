#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mstnet/errors.hpp"
#include "mstnet/sample.hpp"

namespace mstnet::data {

inline constexpr int kManifestVersion = 1;
inline constexpr char kEegMagic[8] = {'M', 'S', 'T', 'E', 'E', 'G', '0', '1'};
inline constexpr char kVolumeMagic[8] = {'M', 'S', 'T', 'V', 'O', 'L', '0', '1'};

// Recipe for the synthetic multimodal dataset. Each class plants a distinct
// EEG frequency, a class-sized dark central blob in the volume, shifted
// clinical score means, and skewed categorical frequencies. `noise` scales
// every nuisance term; at 0 the numerical fields sit exactly at the class
// means.
struct GeneratorConfig {
  std::size_t n = 100;
  std::uint64_t seed = 1;
  double noise = 0.5;
  double train_fraction = 0.8;
  std::size_t eeg_length = 128;
  std::size_t eeg_channels = 8;
  std::size_t volume_size = 32;  // D = H = W
  std::array<std::size_t, 3> eeg_frequencies{16, 10, 6};

  DataDims dims() const {
    return {eeg_length, eeg_channels, volume_size, volume_size, volume_size};
  }

  void validate() const {
    if (n < 6) {
      throw DataError(DataError::Kind::kTooFewSamples,
                      "need >= 2 per class (n >= 6), got n=" + std::to_string(n));
    }
    if (eeg_length < 4) throw ConfigError("eeg_length must be >= 4");
    if (eeg_channels < 1) throw ConfigError("eeg_channels must be >= 1");
    if (volume_size < 8) throw ConfigError("volume_size must be >= 8");
    if (!(train_fraction > 0 && train_fraction < 1)) {
      throw ConfigError("train_fraction must be in (0, 1)");
    }
    if (!(noise >= 0)) throw ConfigError("noise must be >= 0");
    for (std::size_t f : eeg_frequencies) {
      if (f < 1 || f > eeg_length / 2) {
        throw ConfigError("EEG class frequency " + std::to_string(f) + " outside [1, T/2]");
      }
    }
  }
};

inline void to_json(nlohmann::json& j, const GeneratorConfig& g) {
  j = nlohmann::json{{"n", g.n},
                     {"seed", g.seed},
                     {"noise", g.noise},
                     {"train_fraction", g.train_fraction},
                     {"eeg_length", g.eeg_length},
                     {"eeg_channels", g.eeg_channels},
                     {"volume_size", g.volume_size},
                     {"eeg_frequencies", g.eeg_frequencies}};
}

inline void from_json(const nlohmann::json& j, GeneratorConfig& g) {
  const nlohmann::json known = GeneratorConfig{};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw ConfigError("unknown generator key '" + it.key() + "'");
  }
  try {
    if (j.contains("n")) g.n = j.at("n").get<std::size_t>();
    if (j.contains("seed")) g.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("noise")) g.noise = j.at("noise").get<double>();
    if (j.contains("train_fraction")) g.train_fraction = j.at("train_fraction").get<double>();
    if (j.contains("eeg_length")) g.eeg_length = j.at("eeg_length").get<std::size_t>();
    if (j.contains("eeg_channels")) g.eeg_channels = j.at("eeg_channels").get<std::size_t>();
    if (j.contains("volume_size")) g.volume_size = j.at("volume_size").get<std::size_t>();
    if (j.contains("eeg_frequencies")) {
      g.eeg_frequencies = j.at("eeg_frequencies").get<std::array<std::size_t, 3>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
}

inline tabular::TabularSchema default_schema() {
  tabular::TabularSchema s;
  s.numerical = {"age", "mmse", "moca", "cdr_sb", "adas_cog", "education_years"};
  s.categorical = {{"sex", {"female", "male"}},
                   {"marital_status", {"married", "single", "widowed", "divorced"}},
                   {"education", {"primary", "secondary", "tertiary"}}};
  return s;
}

struct Dataset {
  std::filesystem::path root;
  tabular::TabularSchema schema;
  DataDims dims;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::vector<Sample> samples;
  std::vector<std::size_t> train;  // sample indices
  std::vector<std::size_t> eval;
};

// ---------------------------------------------------------------------------
// Little-endian binary helpers
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline float get_f32(const std::string& in, std::size_t offset) {
  return std::bit_cast<float>(get_u32(in, offset));
}

inline std::string read_file(const std::filesystem::path& path, const std::string& sample_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(DataError::Kind::kMissingFile,
                    "missing file '" + path.string() + "'" +
                        (sample_id.empty() ? "" : " for sample " + sample_id));
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::kMissingFile, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

inline double parse_double(const std::string& s, const std::string& context) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError(DataError::Kind::kFormat, context + ": cannot parse '" + s + "'");
  }
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

// 16-byte header (8-byte magic, T, C as u32) then T*C float32, time-major.
inline std::string encode_eeg(const std::vector<float>& eeg, std::size_t T, std::size_t C) {
  std::string out(kEegMagic, kEegMagic + 8);
  detail::put_u32(out, static_cast<std::uint32_t>(T));
  detail::put_u32(out, static_cast<std::uint32_t>(C));
  for (float v : eeg) detail::put_f32(out, v);
  return out;
}

// 20-byte header (8-byte magic, D, H, W as u32) then D*H*W float32.
inline std::string encode_volume(const std::vector<float>& vol, std::size_t D, std::size_t H,
                                 std::size_t W) {
  std::string out(kVolumeMagic, kVolumeMagic + 8);
  detail::put_u32(out, static_cast<std::uint32_t>(D));
  detail::put_u32(out, static_cast<std::uint32_t>(H));
  detail::put_u32(out, static_cast<std::uint32_t>(W));
  for (float v : vol) detail::put_f32(out, v);
  return out;
}

inline std::vector<float> decode_eeg(const std::string& bytes, const DataDims& dims,
                                     const std::string& id) {
  auto mismatch = [&](const std::string& why) {
    return DataError(DataError::Kind::kDimMismatch, "sample " + id + ": EEG " + why);
  };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kEegMagic, 8) != 0) {
    throw mismatch("file has a bad header");
  }
  const std::size_t T = detail::get_u32(bytes, 8), C = detail::get_u32(bytes, 12);
  if (T != dims.eeg_length || C != dims.eeg_channels) {
    throw mismatch("dims " + std::to_string(T) + "x" + std::to_string(C) + " != declared " +
                   std::to_string(dims.eeg_length) + "x" + std::to_string(dims.eeg_channels));
  }
  if (bytes.size() != 16 + 4 * T * C) {
    throw mismatch("payload is " + std::to_string(bytes.size() - 16) + " bytes, expected " +
                   std::to_string(4 * T * C));
  }
  std::vector<float> out(T * C);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::get_f32(bytes, 16 + 4 * i);
  return out;
}

inline std::vector<float> decode_volume(const std::string& bytes, const DataDims& dims,
                                        const std::string& id) {
  auto mismatch = [&](const std::string& why) {
    return DataError(DataError::Kind::kDimMismatch, "sample " + id + ": volume " + why);
  };
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kVolumeMagic, 8) != 0) {
    throw mismatch("file has a bad header");
  }
  const std::size_t D = detail::get_u32(bytes, 8), H = detail::get_u32(bytes, 12),
                    W = detail::get_u32(bytes, 16);
  if (D != dims.depth || H != dims.height || W != dims.width) {
    throw mismatch("dims " + std::to_string(D) + "x" + std::to_string(H) + "x" +
                   std::to_string(W) + " != declared");
  }
  if (bytes.size() != 20 + 4 * D * H * W) {
    throw mismatch("payload is " + std::to_string(bytes.size() - 20) + " bytes, expected " +
                   std::to_string(4 * D * H * W));
  }
  std::vector<float> out(D * H * W);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::get_f32(bytes, 20 + 4 * i);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

namespace detail {

struct NumericProfile {
  const char* name;
  std::array<double, 3> mean;  // per class
  double spread;
};

inline const std::array<NumericProfile, 6>& numeric_profiles() {
  static const std::array<NumericProfile, 6> profiles{{
      {"age", {68.0, 72.0, 76.0}, 6.0},
      {"mmse", {29.0, 26.0, 21.0}, 1.5},
      {"moca", {27.0, 23.0, 18.0}, 2.0},
      {"cdr_sb", {0.2, 1.5, 4.5}, 0.8},
      {"adas_cog", {8.0, 14.0, 22.0}, 3.0},
      {"education_years", {15.0, 13.5, 12.0}, 3.0},
  }};
  return profiles;
}

// Category probabilities per class, per categorical field.
inline const std::array<std::array<std::vector<double>, 3>, 3>& categorical_profiles() {
  static const std::array<std::array<std::vector<double>, 3>, 3> p{{
      {{{0.5, 0.5}, {0.55, 0.45}, {0.65, 0.35}}},
      {{{0.6, 0.2, 0.1, 0.1}, {0.5, 0.2, 0.2, 0.1}, {0.4, 0.1, 0.4, 0.1}}},
      {{{0.1, 0.4, 0.5}, {0.25, 0.45, 0.3}, {0.45, 0.4, 0.15}}},
  }};
  return p;
}

// Dark central blob radius (fraction of the half-extent) per class.
inline constexpr std::array<double, 3> kBlobRadius{0.18, 0.30, 0.42};

}  // namespace detail

// Samples are labelled round-robin (i mod 3) and split by a seeded,
// class-interleaved shuffle, so both splits stay balanced.
inline Dataset generate_samples(const GeneratorConfig& g) {
  g.validate();
  Dataset ds;
  ds.schema = default_schema();
  ds.dims = g.dims();
  ds.seed = g.seed;
  ds.train_fraction = g.train_fraction;
  std::mt19937_64 rng(g.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const std::size_t T = g.eeg_length, C = g.eeg_channels, S = g.volume_size;
  const double two_pi = 2.0 * std::numbers::pi;

  for (std::size_t i = 0; i < g.n; ++i) {
    Sample s;
    char id[32];
    std::snprintf(id, sizeof(id), "s%04zu", i);
    s.id = id;
    s.label = i % 3;
    const std::size_t c = s.label;

    for (const auto& prof : detail::numeric_profiles()) {
      s.tabular.numerical.push_back(prof.mean[c] + g.noise * prof.spread * normal(rng));
    }
    for (const auto& field : detail::categorical_profiles()) {
      const auto& probs = field[c];
      std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
      s.tabular.categorical.push_back(pick(rng));
    }

    // EEG: class-frequency rhythm with per-channel phase and gain, a weak
    // shared slow drift, and white noise.
    s.eeg.resize(T * C);
    const double f = static_cast<double>(g.eeg_frequencies[c]);
    std::vector<double> phase(C), gain(C);
    for (std::size_t ch = 0; ch < C; ++ch) {
      phase[ch] = two_pi * uniform(rng);
      gain[ch] = 0.8 + 0.4 * uniform(rng);
    }
    const double drift_phase = two_pi * uniform(rng);
    for (std::size_t t = 0; t < T; ++t) {
      const double tt = static_cast<double>(t) / static_cast<double>(T);
      for (std::size_t ch = 0; ch < C; ++ch) {
        const double v = gain[ch] * std::sin(two_pi * f * tt + phase[ch]) +
                         0.3 * std::sin(two_pi * 1.0 * tt + drift_phase) + g.noise * normal(rng);
        s.eeg[t * C + ch] = static_cast<float>(v);
      }
    }

    // Volume: bright ellipsoid "brain" with a dark central blob whose radius
    // grows with class, jittered in position, plus voxel noise.
    s.volume.resize(S * S * S);
    const double jitter = 0.05 * g.noise;
    const double cz = jitter * normal(rng), cy = jitter * normal(rng), cx = jitter * normal(rng);
    const double r_blob = detail::kBlobRadius[c];
    for (std::size_t z = 0; z < S; ++z) {
      for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
          auto coord = [S](std::size_t k) {
            return (static_cast<double>(k) + 0.5) / static_cast<double>(S) * 2.0 - 1.0;
          };
          const double pz = coord(z), py = coord(y), px = coord(x);
          const double brain = (pz * pz) / 0.64 + (py * py) / 0.72 + (px * px) / 0.56;
          double v = brain <= 1.0 ? 1.0 : 0.0;
          const double dz = pz - cz, dy = py - cy, dx = px - cx;
          const double r2 = dz * dz + dy * dy + dx * dx;
          v -= 0.9 * std::exp(-r2 / (2.0 * r_blob * r_blob));
          v += 0.3 * g.noise * normal(rng);
          s.volume[(z * S + y) * S + x] = static_cast<float>(v);
        }
      }
    }
    ds.samples.push_back(std::move(s));
  }

  // Class-interleaved seeded split.
  std::array<std::vector<std::size_t>, 3> by_class;
  for (std::size_t i = 0; i < g.n; ++i) by_class[i % 3].push_back(i);
  std::mt19937_64 split_rng(g.seed ^ 0x9e3779b97f4a7c15ull);
  for (auto& v : by_class) std::shuffle(v.begin(), v.end(), split_rng);
  std::vector<std::size_t> order;
  for (std::size_t k = 0; order.size() < g.n; ++k) {
    for (auto& v : by_class) {
      if (k < v.size()) order.push_back(v[k]);
    }
  }
  const auto n_train = static_cast<std::size_t>(
      std::llround(g.train_fraction * static_cast<double>(g.n)));
  ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.eval.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.eval.begin(), ds.eval.end());
  return ds;
}

// ---------------------------------------------------------------------------
// Manifest and files
// ---------------------------------------------------------------------------

inline nlohmann::json schema_to_json(const tabular::TabularSchema& s) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : s.categorical) cats.push_back({{"name", c.name}, {"vocabulary", c.vocabulary}});
  return {{"numerical", s.numerical}, {"categorical", cats}};
}

inline tabular::TabularSchema schema_from_json(const nlohmann::json& j) {
  tabular::TabularSchema s;
  s.numerical = j.at("numerical").get<std::vector<std::string>>();
  for (const auto& c : j.at("categorical")) {
    s.categorical.push_back(
        {c.at("name").get<std::string>(), c.at("vocabulary").get<std::vector<std::string>>()});
  }
  s.validate();
  return s;
}

inline std::string tabular_csv(const Dataset& ds) {
  std::string out = "id";
  for (const auto& n : ds.schema.numerical) out += "," + n;
  for (const auto& c : ds.schema.categorical) out += "," + c.name;
  out += "\n";
  for (const auto& s : ds.samples) {
    out += s.id;
    for (double v : s.tabular.numerical) out += "," + detail::format_double(v);
    for (std::size_t j = 0; j < s.tabular.categorical.size(); ++j) {
      out += "," + ds.schema.categorical[j].vocabulary[s.tabular.categorical[j]];
    }
    out += "\n";
  }
  return out;
}

inline std::filesystem::path write_dataset(const Dataset& ds, const GeneratorConfig& g,
                                           const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "eeg");
  fs::create_directories(root / "mri");
  std::vector<char> is_train(ds.samples.size(), 0);
  for (std::size_t i : ds.train) is_train[i] = 1;

  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    const std::string eeg_rel = "eeg/" + s.id + ".eeg";
    const std::string vol_rel = "mri/" + s.id + ".vol";
    detail::write_file(root / eeg_rel, encode_eeg(s.eeg, ds.dims.eeg_length, ds.dims.eeg_channels));
    detail::write_file(root / vol_rel,
                       encode_volume(s.volume, ds.dims.depth, ds.dims.height, ds.dims.width));
    samples.push_back({{"id", s.id},
                       {"label", kClassLabels[s.label]},
                       {"split", is_train[i] ? "train" : "eval"},
                       {"eeg", eeg_rel},
                       {"volume", vol_rel}});
  }
  detail::write_file(root / "tabular.csv", tabular_csv(ds));

  nlohmann::json labels = nlohmann::json::array();
  for (const char* l : kClassLabels) labels.push_back(l);
  nlohmann::json tab = schema_to_json(ds.schema);
  tab["file"] = "tabular.csv";
  const nlohmann::json manifest{
      {"format", "mstnet-dataset"},
      {"version", kManifestVersion},
      {"sample_count", ds.samples.size()},
      {"seed", ds.seed},
      {"generator", g},
      {"tabular", tab},
      {"eeg", {{"length", ds.dims.eeg_length}, {"channels", ds.dims.eeg_channels}}},
      {"volume",
       {{"depth", ds.dims.depth}, {"height", ds.dims.height}, {"width", ds.dims.width}}},
      {"class_labels", labels},
      {"split", {{"train_fraction", ds.train_fraction}}},
      {"samples", samples},
  };
  const fs::path manifest_path = root / "manifest.json";
  detail::write_file(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

inline std::filesystem::path generate(const GeneratorConfig& g, const std::filesystem::path& root) {
  return write_dataset(generate_samples(g), g, root);
}

namespace detail {

inline Dataset load_dataset_impl(const std::filesystem::path& manifest_path) {
  using Kind = DataError::Kind;
  const std::string text = read_file(manifest_path, "");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(Kind::kFormat, "manifest '" + manifest_path.string() + "': " + e.what());
  }
  if (!m.is_object() || !m.contains("version") || !m["version"].is_number_integer() ||
      m["version"].get<int>() != kManifestVersion) {
    throw DataError(Kind::kVersionMismatch,
                    "manifest '" + manifest_path.string() + "' has version " +
                        (m.is_object() && m.contains("version") ? m["version"].dump() : "<none>") +
                        ", expected " + std::to_string(kManifestVersion));
  }
  Dataset ds;
  ds.root = manifest_path.parent_path();
  try {
    ds.schema = schema_from_json(m.at("tabular"));
    ds.dims.eeg_length = m.at("eeg").at("length").get<std::size_t>();
    ds.dims.eeg_channels = m.at("eeg").at("channels").get<std::size_t>();
    ds.dims.depth = m.at("volume").at("depth").get<std::size_t>();
    ds.dims.height = m.at("volume").at("height").get<std::size_t>();
    ds.dims.width = m.at("volume").at("width").get<std::size_t>();
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.train_fraction = m.at("split").at("train_fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(Kind::kFormat, "manifest '" + manifest_path.string() + "': " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(Kind::kSchema, e.what());
  }
  const auto labels = m.at("class_labels").get<std::vector<std::string>>();

  // Tabular CSV, keyed by id.
  const std::string csv_name = m.at("tabular").value("file", std::string("tabular.csv"));
  const std::string csv = read_file(ds.root / csv_name, "");
  std::stringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  const auto header = detail::split_csv_line(line);
  const std::size_t kn = ds.schema.numerical.size(), kc = ds.schema.categorical.size();
  {
    std::vector<std::string> expected{"id"};
    for (const auto& n : ds.schema.numerical) expected.push_back(n);
    for (const auto& c : ds.schema.categorical) expected.push_back(c.name);
    if (header != expected) {
      throw DataError(Kind::kSchema, "tabular header does not match the manifest schema");
    }
  }
  std::vector<std::pair<std::string, tabular::TabularRecord>> rows;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 1 + kn + kc) {
      throw DataError(Kind::kFormat, "tabular row '" + cells.front() + "' has " +
                                         std::to_string(cells.size()) + " cells");
    }
    tabular::TabularRecord r;
    for (std::size_t j = 0; j < kn; ++j) {
      r.numerical.push_back(detail::parse_double(cells[1 + j], "sample " + cells[0]));
    }
    for (std::size_t j = 0; j < kc; ++j) {
      const auto& vocab = ds.schema.categorical[j].vocabulary;
      const auto it = std::find(vocab.begin(), vocab.end(), cells[1 + kn + j]);
      if (it == vocab.end()) {
        throw DataError(Kind::kFormat, "sample " + cells[0] + ": unknown category '" +
                                           cells[1 + kn + j] + "' for '" +
                                           ds.schema.categorical[j].name + "'");
      }
      r.categorical.push_back(static_cast<std::size_t>(it - vocab.begin()));
    }
    rows.emplace_back(cells[0], std::move(r));
  }

  const auto& entries = m.at("samples");
  if (entries.size() != m.at("sample_count").get<std::size_t>()) {
    throw DataError(Kind::kFormat, "manifest sample_count disagrees with its sample list");
  }
  for (const auto& e : entries) {
    Sample s;
    s.id = e.at("id").get<std::string>();
    const std::string label = e.at("label").get<std::string>();
    const auto li = std::find(labels.begin(), labels.end(), label);
    const auto ki = std::find(kClassLabels.begin(), kClassLabels.end(), label);
    if (li == labels.end() || ki == kClassLabels.end()) {
      throw DataError(Kind::kUnknownLabel, "sample " + s.id + ": unknown label '" + label + "'");
    }
    s.label = static_cast<std::size_t>(ki - kClassLabels.begin());
    const auto row = std::find_if(rows.begin(), rows.end(),
                                  [&](const auto& r) { return r.first == s.id; });
    if (row == rows.end()) {
      throw DataError(Kind::kFormat, "sample " + s.id + ": no tabular row");
    }
    s.tabular = row->second;
    s.eeg = decode_eeg(detail::read_file(ds.root / e.at("eeg").get<std::string>(), s.id), ds.dims,
                       s.id);
    s.volume = decode_volume(
        detail::read_file(ds.root / e.at("volume").get<std::string>(), s.id), ds.dims, s.id);
    const std::string split = e.at("split").get<std::string>();
    if (split == "train") {
      ds.train.push_back(ds.samples.size());
    } else if (split == "eval") {
      ds.eval.push_back(ds.samples.size());
    } else {
      throw DataError(Kind::kFormat, "sample " + s.id + ": unknown split '" + split + "'");
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace detail

// Loads and validates everything the manifest references. Nothing is
// returned unless every sample loads.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  try {
    return detail::load_dataset_impl(manifest_path);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataError::Kind::kFormat,
                    "manifest '" + manifest_path.string() + "': " + e.what());
  }
}

// z-score statistics over the given samples (population variance; unit
// spread substituted for constant fields).
inline NormalizationStats compute_stats(const Dataset& ds, const std::vector<std::size_t>& idx) {
  const std::size_t kn = ds.schema.numerical.size();
  NormalizationStats st;
  st.mean.assign(kn, 0.0);
  st.stddev.assign(kn, 1.0);
  if (idx.empty()) return st;
  for (std::size_t j = 0; j < kn; ++j) {
    double m = 0;
    for (std::size_t i : idx) m += ds.samples[i].tabular.numerical[j];
    m /= static_cast<double>(idx.size());
    double v = 0;
    for (std::size_t i : idx) {
      const double d = ds.samples[i].tabular.numerical[j] - m;
      v += d * d;
    }
    v /= static_cast<double>(idx.size());
    st.mean[j] = m;
    st.stddev[j] = v > 1e-12 ? std::sqrt(v) : 1.0;
  }
  return st;
}

}  // namespace mstnet::data
