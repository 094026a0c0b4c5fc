#pragma once

#include "vseg/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vseg {

inline constexpr double kMatchThreshold = 0.3;

/// |a & b| / |a | b|; 0 when both are empty.
double iou(const MaskImage& a, const MaskImage& b);

/// Row -> column assignment maximizing the total weight of a (possibly
/// rectangular) matrix. Unassigned rows map to -1.
std::vector<int> max_weight_assignment(const ImageD& weights);

struct MatchPair {
  int pred = 0;
  int gt = 0;
  double iou = 0.0;
};

struct MatchReport {
  std::vector<MatchPair> matches;
  std::vector<int> unmatched_preds;
  std::vector<int> unmatched_gts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  nlohmann::json to_json() const;
};

/// One-to-one matching maximizing total IoU over pairs with IoU >= threshold.
MatchReport match_and_score(const std::vector<MaskImage>& preds, const std::vector<MaskImage>& gts,
                            double threshold = kMatchThreshold);

struct StageTime {
  std::string name;
  double seconds = 0.0;
};

struct ThroughputReport {
  std::vector<StageTime> stages;
  double total_seconds = 0.0;
  int frames = 0;
  double effective_fps = 0.0;
  std::optional<double> recording_fps;
  std::optional<double> realtime_ratio;
  bool streaming = false;

  double stage_sum() const;
  nlohmann::json to_json() const;
};

/// Stage and total times below 1 ms are clamped to 1 ms. The ratio is
/// omitted when the recording rate is unknown (<= 0).
ThroughputReport make_throughput_report(int frames, std::vector<StageTime> stages, double total_seconds,
                                        double recording_fps);

/// RGB overlay: background in gray, predictions in red, ground truth in green.
void write_overlay_png(const std::vector<MaskImage>& preds, const std::vector<MaskImage>& gts,
                       const Image* background, const std::filesystem::path& path);

}  // namespace vseg
