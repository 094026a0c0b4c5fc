#include "vseg/pipeline.hpp"

#include <fstream>
#include <sstream>

namespace vseg {

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void read_path(const nlohmann::json& j, const char* key, std::filesystem::path& field) {
  std::string s = field.string();
  read_key(j, key, s);
  field = s;
}

}  // namespace

nlohmann::json PipelineConfig::to_json() const {
  return {{"input", input.string()},
          {"output_dir", output_dir.string()},
          {"weights", weights.string()},
          {"masks", masks.string()},
          {"segment_length", segment_length},
          {"patch_size", patch_size},
          {"stride", stride},
          {"motion_patch", motion_patch},
          {"search_radius", search_radius},
          {"reference_frames", reference_frames},
          {"subpixel", subpixel},
          {"threshold", threshold},
          {"min_area", min_area},
          {"max_area", max_area},
          {"min_solidity", min_solidity},
          {"max_eccentricity", max_eccentricity},
          {"max_rank", max_rank},
          {"rank_error", rank_error},
          {"nmf_iterations", nmf_iterations},
          {"nmf_tolerance", nmf_tolerance},
          {"nmf_seed", nmf_seed},
          {"footprint_level", footprint_level},
          {"merge_iou", merge_iou},
          {"stages", stages()},
          {"write_corrected", write_corrected},
          {"write_maps", write_maps},
          {"streaming", streaming},
          {"threads", threads},
          {"frame_rate", frame_rate}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  PipelineConfig c;
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    if (value.is_object() || value.is_array()) throw ConfigError("config key '" + key + "' must be a scalar");
  }
  read_path(j, "input", c.input);
  read_path(j, "output_dir", c.output_dir);
  read_path(j, "weights", c.weights);
  read_path(j, "masks", c.masks);
  read_key(j, "segment_length", c.segment_length);
  read_key(j, "patch_size", c.patch_size);
  read_key(j, "stride", c.stride);
  read_key(j, "motion_patch", c.motion_patch);
  read_key(j, "search_radius", c.search_radius);
  read_key(j, "reference_frames", c.reference_frames);
  read_key(j, "subpixel", c.subpixel);
  read_key(j, "threshold", c.threshold);
  read_key(j, "min_area", c.min_area);
  read_key(j, "max_area", c.max_area);
  read_key(j, "min_solidity", c.min_solidity);
  read_key(j, "max_eccentricity", c.max_eccentricity);
  read_key(j, "max_rank", c.max_rank);
  read_key(j, "rank_error", c.rank_error);
  read_key(j, "nmf_iterations", c.nmf_iterations);
  read_key(j, "nmf_tolerance", c.nmf_tolerance);
  read_key(j, "nmf_seed", c.nmf_seed);
  read_key(j, "footprint_level", c.footprint_level);
  read_key(j, "merge_iou", c.merge_iou);
  if (j.contains("stages")) {
    std::string s;
    read_key(j, "stages", s);
    c.set_stages(s);
  }
  read_key(j, "write_corrected", c.write_corrected);
  read_key(j, "write_maps", c.write_maps);
  read_key(j, "streaming", c.streaming);
  read_key(j, "threads", c.threads);
  read_key(j, "frame_rate", c.frame_rate);
  c.validate();
  return c;
}

void PipelineConfig::set_stages(const std::string& list) {
  stage_motion = stage_segment = stage_trace = false;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "motion") {
      stage_motion = true;
    } else if (item == "segment") {
      stage_segment = true;
    } else if (item == "trace") {
      stage_trace = true;
    } else if (item == "all") {
      stage_motion = stage_segment = stage_trace = true;
    } else {
      throw ConfigError("unknown stage '" + item + "' (expected motion, segment, trace)");
    }
  }
  if (!stage_motion && !stage_segment && !stage_trace) throw ConfigError("no stages enabled");
}

std::string PipelineConfig::stages() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ',';
    s += name;
  };
  add(stage_motion, "motion");
  add(stage_segment, "segment");
  add(stage_trace, "trace");
  return s;
}

void PipelineConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(segment_length >= 2, "segment_length must be at least 2");
  require(patch_size == kPatchSize, "patch_size is fixed at 64 by the network");
  require(stride >= 1 && stride <= patch_size, "stride must be in [1, patch_size]");
  require(motion_patch >= 3, "motion_patch must be at least 3");
  require(search_radius >= 0, "search_radius must be non-negative");
  require(reference_frames >= 1, "reference_frames must be positive");
  require(threshold > 0 && threshold < 1, "threshold must be in (0, 1)");
  require(min_area >= 1 && max_area >= min_area, "area bounds are empty");
  require(min_solidity >= 0 && min_solidity <= 1, "min_solidity must be in [0, 1]");
  require(max_eccentricity >= 0 && max_eccentricity <= 1, "max_eccentricity must be in [0, 1]");
  require(max_rank >= 1, "max_rank must be positive");
  require(rank_error > 0, "rank_error must be positive");
  require(nmf_iterations >= 1, "nmf_iterations must be positive");
  require(nmf_tolerance >= 0, "nmf_tolerance must be non-negative");
  require(footprint_level > 0 && footprint_level < 1, "footprint_level must be in (0, 1)");
  require(merge_iou > 0 && merge_iou <= 1, "merge_iou must be in (0, 1]");
  require(threads >= 1, "threads must be positive");
  require(frame_rate >= 0, "frame_rate must be non-negative");
}

MotionConfig PipelineConfig::motion_config() const {
  MotionConfig m;
  m.patch_size = motion_patch;
  m.search_radius = search_radius;
  m.subpixel = subpixel;
  m.reference_frames = reference_frames;
  m.threads = threads;
  return m;
}

ReconstructionConfig PipelineConfig::reconstruction_config() const {
  ReconstructionConfig r;
  r.threshold = threshold;
  r.filter = RegionFilter{min_area, max_area, min_solidity, max_eccentricity};
  r.max_rank = max_rank;
  r.rank_error = rank_error;
  r.nmf = NmfOptions{nmf_iterations, nmf_tolerance, nmf_seed};
  r.footprint_level = footprint_level;
  r.merge_iou = merge_iou;
  r.threads = threads;
  return r;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return PipelineConfig::from_json(j);
}

void save_config(const PipelineConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << config.to_json().dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace vseg
