#pragma once

#include <array>
#include <string>
#include <vector>

#include "mstnet/tabular.hpp"

namespace mstnet {

inline constexpr std::array<const char*, 3> kClassLabels{"NC", "MCI", "AD"};

struct DataDims {
  std::size_t eeg_length = 128;
  std::size_t eeg_channels = 8;
  std::size_t depth = 32;
  std::size_t height = 32;
  std::size_t width = 32;

  std::size_t volume_size() const { return depth * height * width; }
  bool operator==(const DataDims&) const = default;
};

// One subject: tabular record, [T x C] time-major EEG, D x H x W volume.
struct Sample {
  std::string id;
  tabular::TabularRecord tabular;
  std::vector<float> eeg;
  std::vector<float> volume;
  std::size_t label = 0;  // 0 NC, 1 MCI, 2 AD
};

// z-score statistics of the numerical tabular fields, taken from the
// training split and stored with checkpoints.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool operator==(const NormalizationStats&) const = default;
};

}  // namespace mstnet
