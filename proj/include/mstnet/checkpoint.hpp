#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "mstnet/config.hpp"
#include "mstnet/data.hpp"
#include "mstnet/model.hpp"

namespace mstnet::checkpoint {

inline constexpr const char* kMagicLine = "MSTNET-CHECKPOINT 1";
inline constexpr int kVersion = 1;

// Layout: magic line, header byte count line, JSON header line, then the
// payload of little-endian float32 values for each tensor in header order.
// The header carries config, schema, data dims, normalization statistics,
// the tensor directory, and a CRC-32 of the payload.
inline std::string serialize(const MstNet<float>& model) {
  const auto params = model.parameters();
  std::string payload;
  nlohmann::json directory = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : params) {
    directory.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}});
    for (float v : p.tensor.data()) data::detail::put_f32(payload, v);
    offset += p.tensor.size();
  }
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
                         static_cast<uInt>(payload.size()));
  const auto& d = model.dims();
  const nlohmann::json header{
      {"version", kVersion},
      {"config", model.config()},
      {"config_hash", config_hash(model.config())},
      {"schema", data::schema_to_json(model.schema())},
      {"dims",
       {{"eeg_length", d.eeg_length},
        {"eeg_channels", d.eeg_channels},
        {"depth", d.depth},
        {"height", d.height},
        {"width", d.width}}},
      {"normalization", {{"mean", model.stats().mean}, {"stddev", model.stats().stddev}}},
      {"tensors", directory},
      {"payload_floats", offset},
      {"crc32", static_cast<std::uint64_t>(crc)},
  };
  const std::string h = header.dump();
  std::string out = std::string(kMagicLine) + "\n" + std::to_string(h.size()) + "\n" + h + "\n";
  out += payload;
  return out;
}

inline void save_checkpoint(const MstNet<float>& model, const std::filesystem::path& path) {
  data::detail::write_file(path, serialize(model));
}

struct Header {
  ModelConfig config;
  std::string config_hash;
  tabular::TabularSchema schema;
  DataDims dims;
  NormalizationStats stats;
  nlohmann::json raw;
};

namespace detail {

inline std::pair<Header, std::string> split(const std::string& bytes, const std::string& where) {
  using Kind = DataError::Kind;
  const std::string magic = std::string(kMagicLine) + "\n";
  if (bytes.compare(0, magic.size(), magic) != 0) {
    throw DataError(Kind::kFormat, where + ": not a checkpoint file");
  }
  const std::size_t nl = bytes.find('\n', magic.size());
  if (nl == std::string::npos) throw DataError(Kind::kFormat, where + ": truncated header");
  std::size_t header_len = 0;
  try {
    header_len = std::stoull(bytes.substr(magic.size(), nl - magic.size()));
  } catch (const std::logic_error&) {
    throw DataError(Kind::kFormat, where + ": bad header length");
  }
  const std::size_t start = nl + 1;
  if (start + header_len + 1 > bytes.size()) {
    throw DataError(Kind::kFormat, where + ": truncated header");
  }
  Header h;
  try {
    h.raw = nlohmann::json::parse(bytes.substr(start, header_len));
    if (h.raw.at("version").get<int>() != kVersion) {
      throw DataError(Kind::kVersionMismatch, where + ": unsupported checkpoint version " +
                                                  h.raw.at("version").dump());
    }
    h.config = config_from_json(h.raw.at("config"));
    h.config_hash = h.raw.at("config_hash").get<std::string>();
    h.schema = data::schema_from_json(h.raw.at("schema"));
    const auto& d = h.raw.at("dims");
    h.dims = {d.at("eeg_length").get<std::size_t>(), d.at("eeg_channels").get<std::size_t>(),
              d.at("depth").get<std::size_t>(), d.at("height").get<std::size_t>(),
              d.at("width").get<std::size_t>()};
    h.stats.mean = h.raw.at("normalization").at("mean").get<std::vector<double>>();
    h.stats.stddev = h.raw.at("normalization").at("stddev").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(Kind::kFormat, where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(Kind::kSchema, where + ": incompatible config: " + e.what());
  }
  if (h.config_hash != config_hash(h.config)) {
    throw DataError(Kind::kSchema, where + ": config hash does not match its config");
  }
  return {std::move(h), bytes.substr(start + header_len + 1)};
}

}  // namespace detail

inline Header read_header(const std::filesystem::path& path) {
  return detail::split(data::detail::read_file(path, ""), path.string()).first;
}

inline std::unique_ptr<MstNet<float>> deserialize(const std::string& bytes,
                                                  const std::string& where = "checkpoint") {
  using Kind = DataError::Kind;
  auto [header, payload] = detail::split(bytes, where);
  const std::uint64_t floats = header.raw.at("payload_floats").get<std::uint64_t>();
  if (payload.size() != 4 * floats) {
    throw DataError(Kind::kChecksum, where + ": payload is " + std::to_string(payload.size()) +
                                         " bytes, header declares " + std::to_string(4 * floats));
  }
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
                         static_cast<uInt>(payload.size()));
  if (static_cast<std::uint64_t>(crc) != header.raw.at("crc32").get<std::uint64_t>()) {
    throw DataError(Kind::kChecksum, where + ": payload checksum mismatch");
  }
  auto model =
      std::make_unique<MstNet<float>>(header.config, header.schema, header.dims, header.stats);
  auto params = model->parameters();
  const auto& dir = header.raw.at("tensors");
  if (dir.size() != params.size()) {
    throw DataError(Kind::kSchema, where + ": tensor directory has " + std::to_string(dir.size()) +
                                       " entries, config implies " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& e = dir[i];
    if (e.at("name").get<std::string>() != p.name ||
        e.at("shape").get<Shape>() != p.tensor.shape()) {
      throw DataError(Kind::kSchema, where + ": tensor '" + e.at("name").get<std::string>() +
                                         "' does not match the model layout");
    }
    const std::size_t off = e.at("offset").get<std::size_t>();
    if (off + p.tensor.size() > floats) {
      throw DataError(Kind::kFormat, where + ": tensor '" + p.name + "' exceeds the payload");
    }
    auto dst = p.tensor.data();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      dst[k] = data::detail::get_f32(payload, 4 * (off + k));
    }
  }
  return model;
}

inline std::unique_ptr<MstNet<float>> load_checkpoint(const std::filesystem::path& path) {
  return deserialize(data::detail::read_file(path, ""), path.string());
}

// Throws unless the dataset's schema and dims are the ones the model was
// trained on.
inline void check_compatible(const MstNet<float>& model, const data::Dataset& ds) {
  if (!(model.schema() == ds.schema)) {
    throw DataError(DataError::Kind::kSchema,
                    "checkpoint and dataset are incompatible: tabular schemas differ");
  }
  if (!(model.dims() == ds.dims)) {
    throw DataError(DataError::Kind::kSchema,
                    "checkpoint and dataset are incompatible: EEG/volume dims differ");
  }
}

}  // namespace mstnet::checkpoint
