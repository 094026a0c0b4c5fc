#include "vseg/dataset.hpp"

#include "vseg/motion.hpp"
#include "vseg/nmf.hpp"
#include "vseg/parallel.hpp"
#include "vseg/summary.hpp"

#include <cstdio>
#include <fstream>
#include <random>

namespace vseg {

namespace {

std::string video_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "video_%04d", i);
  return buf;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(std::floor(unit_uniform(rng) * (hi - lo + 1)));
}

// Crop origins for one summary pair. Positive draws centre the window range
// on a random spiking pixel; if the segment has none the draw falls back to uniform.
std::vector<Eigen::Vector2i> sample_origins(std::mt19937_64& rng, const MaskImage& target, int count) {
  const int h = static_cast<int>(target.rows()), w = static_cast<int>(target.cols());
  std::vector<Eigen::Index> positives;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    if (target.data()[i]) positives.push_back(i);
  }
  std::vector<Eigen::Vector2i> out;
  for (int p = 0; p < count; ++p) {
    const bool positive = unit_uniform(rng) < 0.5;
    int x, y;
    if (positive && !positives.empty()) {
      const auto pick = positives[std::min<std::size_t>(positives.size() - 1, unit_uniform(rng) * positives.size())];
      const int px = static_cast<int>(pick % w), py = static_cast<int>(pick / w);
      x = uniform_int(rng, std::max(0, px - kPatchSize + 1), std::min(w - kPatchSize, px));
      y = uniform_int(rng, std::max(0, py - kPatchSize + 1), std::min(h - kPatchSize, py));
    } else {
      x = uniform_int(rng, 0, w - kPatchSize);
      y = uniform_int(rng, 0, h - kPatchSize);
    }
    out.emplace_back(x, y);
  }
  return out;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::size_t DatasetManifest::validation_count() const {
  return std::count_if(entries.begin(), entries.end(), [](const PatchEntry& e) { return e.split == "val"; });
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json j;
  j["n_videos"] = n_videos;
  j["patches_per_pair"] = patches_per_pair;
  j["pairs_per_video"] = pairs_per_video;
  j["patch_size"] = patch_size;
  j["inputs"] = "inputs.tif";
  j["targets"] = "segmask.tif";
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    j["entries"].push_back(
        {{"index", e.index}, {"video", e.video}, {"pair", e.pair}, {"x", e.x}, {"y", e.y}, {"split", e.split}});
  }
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.n_videos = j.at("n_videos").get<int>();
    m.patches_per_pair = j.at("patches_per_pair").get<int>();
    m.pairs_per_video = j.at("pairs_per_video").get<int>();
    m.patch_size = j.at("patch_size").get<int>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("index").get<int>(), e.at("video").get<std::string>(), e.at("pair").get<int>(),
                           e.at("x").get<int>(), e.at("y").get<int>(), e.at("split").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset manifest: ") + e.what());
  }
  if (m.patch_size != kPatchSize) throw ConfigError("dataset manifest: patch_size must be 64");
  return m;
}

DatasetManifest generate_training_set(const std::filesystem::path& out_dir, const DatasetConfig& config) {
  if (config.n_videos < 0 || config.patches_per_pair < 0) throw ConfigError("dataset sizes must be non-negative");
  std::filesystem::create_directories(out_dir);
  const int pairs = (config.scene.frames + config.scene.segment_length - 1) / config.scene.segment_length;

  std::vector<std::vector<PatchEntry>> per_video(config.n_videos);
  parallel_for(config.n_videos, config.threads, [&](std::size_t i) {
    SceneConfig scene = config.scene;
    scene.seed = config.seed + i;
    const Simulation sim = synthesize(scene);
    const auto dir = out_dir / video_name(static_cast<int>(i));
    std::filesystem::create_directories(dir);
    save_simulation(sim, scene, dir);
    if (!config.write_videos) std::filesystem::remove(dir / "video.vsegv1");

    MotionConfig motion;
    motion.search_radius = std::max(motion.search_radius, scene.motion_amplitude);
    const auto corrected = correct_motion(sim.video, motion);
    const auto summaries = summarize(corrected.corrected, scene.segment_length);
    std::vector<Image> inputs;
    for (const auto& s : summaries) {
      const auto norm = normalize_pair(s);
      inputs.push_back(norm[0]);
      inputs.push_back(norm[1]);
    }
    save_images(inputs, dir / "inputs.tif");

    std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + i);
    for (int k = 0; k < pairs; ++k) {
      for (const auto& o : sample_origins(rng, sim.truth.segment_masks[k], config.patches_per_pair)) {
        per_video[i].push_back({0, video_name(static_cast<int>(i)), k, o.x(), o.y(), ""});
      }
    }
  });

  DatasetManifest manifest;
  manifest.n_videos = config.n_videos;
  manifest.patches_per_pair = config.patches_per_pair;
  manifest.pairs_per_video = pairs;
  for (auto& group : per_video) {
    for (auto& e : group) {
      e.index = static_cast<int>(manifest.entries.size());
      e.split = is_validation(e.index) ? "val" : "train";
      manifest.entries.push_back(std::move(e));
    }
  }
  write_json(manifest.to_json(), out_dir / "manifest.json");
  return manifest;
}

DatasetManifest load_dataset_manifest(const std::filesystem::path& manifest_json) {
  std::ifstream in(manifest_json);
  if (!in) throw IoError("cannot open " + manifest_json.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(manifest_json.string() + ": " + e.what());
  }
  return DatasetManifest::from_json(j);
}

TrainingPatch load_patch(const std::filesystem::path& dataset_dir, const PatchEntry& entry) {
  const auto dir = dataset_dir / entry.video;
  const auto inputs = load_images(dir / "inputs.tif");
  const auto targets = load_masks(dir / "segmask.tif");
  if (entry.pair < 0 || 2 * static_cast<std::size_t>(entry.pair) + 1 >= inputs.size() ||
      static_cast<std::size_t>(entry.pair) >= targets.size()) {
    throw IoError(dir.string() + ": pair " + std::to_string(entry.pair) + " out of range");
  }
  const Image& s = inputs[2 * entry.pair];
  if (entry.x < 0 || entry.y < 0 || entry.x + kPatchSize > s.cols() || entry.y + kPatchSize > s.rows()) {
    throw IoError(dir.string() + ": crop origin outside the frame");
  }
  TrainingPatch p;
  p.input[0] = s.block(entry.y, entry.x, kPatchSize, kPatchSize);
  p.input[1] = inputs[2 * entry.pair + 1].block(entry.y, entry.x, kPatchSize, kPatchSize);
  p.target = targets[entry.pair].block(entry.y, entry.x, kPatchSize, kPatchSize);
  return p;
}

}  // namespace vseg
