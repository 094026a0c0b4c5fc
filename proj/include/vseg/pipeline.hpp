#pragma once

#include "vseg/evaluation.hpp"
#include "vseg/footprints.hpp"
#include "vseg/motion.hpp"
#include "vseg/trace.hpp"
#include "vseg/unet.hpp"
#include "vseg/video_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace vseg {

/// Error raised inside a pipeline stage; the message is prefixed with `[stage]`.
class StageError : public Error {
 public:
  StageError(const std::string& stage, ErrorKind kind, const std::string& what)
      : Error(kind, "[" + stage + "] " + what), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Every tunable of a run. Serialized as a flat JSON object; unknown keys are
/// rejected so a typo cannot silently fall back to a default.
struct PipelineConfig {
  std::filesystem::path input;
  std::filesystem::path output_dir = "out";
  std::filesystem::path weights;
  std::filesystem::path masks;  ///< footprint masks for a trace-only run

  int segment_length = 50;
  int patch_size = kPatchSize;
  int stride = kMergeStride;

  int motion_patch = 21;
  int search_radius = 10;
  int reference_frames = 50;
  bool subpixel = true;

  double threshold = 0.5;
  int min_area = 40;
  int max_area = 2000;
  double min_solidity = 0.8;
  double max_eccentricity = 0.95;

  int max_rank = 3;
  double rank_error = 0.25;
  int nmf_iterations = 200;
  double nmf_tolerance = 1e-4;
  std::uint64_t nmf_seed = 0;
  double footprint_level = 0.5;
  double merge_iou = 0.6;

  bool stage_motion = true;
  bool stage_segment = true;
  bool stage_trace = true;

  bool write_corrected = false;
  bool write_maps = false;
  bool streaming = true;
  int threads = 1;
  double frame_rate = 0.0;  ///< overrides the rate stored in the input when > 0

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);

  MotionConfig motion_config() const;
  ReconstructionConfig reconstruction_config() const;
  /// "motion,segment,trace" subset to stage toggles.
  void set_stages(const std::string& list);
  std::string stages() const;
  void validate() const;
};

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& config, const std::filesystem::path& path);

struct PipelineResult {
  std::vector<MotionVector> motion;
  Video corrected;
  std::vector<ProbabilityMap> maps;
  FootprintSet footprints;
  std::vector<Trace> traces;
  ThroughputReport throughput;
};

/// In-memory run of the enabled stages. With `streaming` set, motion
/// correction and segmentation overlap at segment granularity. Errors are
/// rethrown with the failing stage prefixed to the message.
PipelineResult process(const Video& video, const WeightBundle* weights, const PipelineConfig& config,
                       const std::vector<MaskImage>* trace_masks = nullptr);

/// Loads inputs, runs process() and writes every artifact into
/// `config.output_dir` with a manifest marking the run complete or partial.
PipelineResult run(const PipelineConfig& config);

/// Synthesizes a recording (unless `input` is given) and times a full run.
ThroughputReport benchmark_pipeline(const PipelineConfig& config, int frames = 2500, int size = 128,
                                    double frame_rate = 400.0, std::uint64_t seed = 1);

}  // namespace vseg
