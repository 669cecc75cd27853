#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "stylecond/image.hpp"
#include "stylecond/synth_data.hpp"

namespace stylecond {

struct DatasetConfig {
  int n = 2000;
  std::uint64_t seed = 1;
  int model_height = 64, model_width = 48;
  int article_height = 24, article_width = 18;
  double occupancy_prob = 0.7;
  double min_scale = 0.8, max_scale = 1.2;
};

struct DatasetEntry {
  OutfitSpec outfit;
  PoseSpec pose;
  ImageTensor model_image;
  std::array<ImageTensor, kNumSlots> article_images;
};

/// (outfit, pose) of entry `index`; the draws make_entry renders.
std::pair<OutfitSpec, PoseSpec> sample_pair(const DatasetConfig& config, int index);

/// Entry `index` of the dataset defined by `config`; a pure function of
/// (config, index).
DatasetEntry make_entry(const DatasetConfig& config, int index);

/// Writes `manifest.json` plus `entry_NNNNNN.bin` records into `dir`
/// (created if missing). Output is byte-for-byte reproducible.
///
/// Record layout (little-endian):
///   16-byte header: magic "OFITDS01", u32 entry index, u32 tensor count (7)
///   per tensor: u32 channels, u32 height, u32 width, float32[c*h*w]
///   u32 byte length + UTF-8 JSON {"outfit": ..., "pose": ...}
void build_dataset(const DatasetConfig& config, const std::filesystem::path& dir);

std::vector<std::uint8_t> encode_entry(const DatasetEntry& entry, std::uint32_t index);
DatasetEntry decode_entry(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_index,
                          const std::string& context = "record");

struct Dataset {
  DatasetConfig config;
  std::vector<DatasetEntry> entries;
};

/// Loads a dataset directory. Throws FormatError with the file path on any
/// mismatch.
Dataset load_dataset(const std::filesystem::path& dir);

std::string entry_filename(int index);

}  // namespace stylecond
