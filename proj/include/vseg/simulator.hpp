#pragma once

#include "vseg/types.hpp"
#include "vseg/video_io.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vseg {

/// Generative parameters of a synthetic voltage-imaging recording.
struct SceneConfig {
  int width = 128;
  int height = 128;
  int frames = 1000;
  double frame_rate = 400.0;
  int min_neurons = 4;
  int max_neurons = 8;
  double min_radius = 5.0;  ///< pixels
  double max_radius = 8.0;
  double overlap_probability = 0.25;  ///< chance a neuron is placed overlapping an earlier one
  double annular_probability = 0.3;   ///< chance of membrane-like ring brightness
  double spike_rate = 4.0;            ///< Hz per neuron
  double spike_amplitude = 0.7;       ///< dF/F at the spike peak
  int vessels = 2;
  double illumination = 0.3;  ///< strength of the multiplicative illumination field
  double noise = 0.1;         ///< noise std as a fraction of the background level
  int motion_amplitude = 5;   ///< pixels
  double motion_rate = 20.0;  ///< one-pixel steps per second per axis
  int segment_length = 50;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static SceneConfig from_json(const nlohmann::json& j);
};

struct NeuronTruth {
  MaskImage footprint;
  double center_x = 0.0;
  double center_y = 0.0;
  std::vector<int> spike_frames;
  std::vector<double> fluorescence;  ///< noiseless per-frame brightness of the neuron
};

struct GroundTruth {
  std::vector<NeuronTruth> neurons;
  std::vector<Eigen::Vector2i> motion;  ///< (dx, dy) per frame, same convention as MotionVector
  std::vector<MaskImage> segment_masks;  ///< union of footprints of neurons spiking in each segment

  std::vector<MaskImage> footprints() const;
  /// Footprints of neurons with at least one spike.
  std::vector<MaskImage> active_footprints() const;
};

struct Simulation {
  Video video;
  GroundTruth truth;
};

Simulation synthesize(const SceneConfig& config);

/// Writes `video.vsegv1`, `gt.json`, `footprints.tif` and `segmask.tif` into `dir`.
void save_simulation(const Simulation& sim, const SceneConfig& config, const std::filesystem::path& dir);

}  // namespace vseg
