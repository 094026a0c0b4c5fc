#pragma once

#include "vseg/simulator.hpp"
#include "vseg/unet.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace vseg {

/// Training-set generation parameters. Video i uses scene seed `seed + i`.
struct DatasetConfig {
  int n_videos = 1000;
  int patches_per_pair = 10;
  SceneConfig scene;
  std::uint64_t seed = 1;
  bool write_videos = true;  ///< keep video.vsegv1 next to the summaries
  int threads = 1;
};

/// One 64x64 training sample: crop origin (x, y) of summary pair `pair` of `video`.
struct PatchEntry {
  int index = 0;
  std::string video;  ///< directory name relative to the dataset root
  int pair = 0;
  int x = 0;
  int y = 0;
  std::string split;  ///< "train" or "val"
};

struct DatasetManifest {
  int n_videos = 0;
  int patches_per_pair = 0;
  int pairs_per_video = 0;
  int patch_size = kPatchSize;
  std::vector<PatchEntry> entries;

  std::size_t validation_count() const;
  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

/// Every fifth patch is held out for validation.
inline bool is_validation(int index) { return index % 5 == 4; }

/// Simulates, motion-corrects and summarizes each video, then samples patches
/// half from spiking regions and half uniformly. Writes per-video directories
/// (`video.vsegv1`, `gt.json`, `footprints.tif`, `segmask.tif`, `inputs.tif`)
/// and `manifest.json`.
DatasetManifest generate_training_set(const std::filesystem::path& out_dir, const DatasetConfig& config = {});

DatasetManifest load_dataset_manifest(const std::filesystem::path& manifest_json);

struct TrainingPatch {
  NormalizedPair input;  ///< 64x64 crops of both normalized channels
  MaskImage target;
};

/// Reads one sample back from a dataset directory.
TrainingPatch load_patch(const std::filesystem::path& dataset_dir, const PatchEntry& entry);

}  // namespace vseg
