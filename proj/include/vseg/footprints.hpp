#pragma once

#include "vseg/nmf.hpp"
#include "vseg/regions.hpp"
#include "vseg/unet.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace vseg {

struct ReconstructionConfig {
  double threshold = 0.5;
  RegionFilter filter;
  int max_rank = 3;
  double rank_error = 0.25;
  NmfOptions nmf;
  double footprint_level = 0.5;  ///< binarize f_j at this fraction of its max
  double merge_iou = 0.6;
  int threads = 1;
};

struct Footprint {
  int id = 0;
  int component = 0;  ///< index into the components of the aggregated mask
  Image weights;      ///< f_j on its component, scaled to a peak of 1
  MaskImage roi;
  Eigen::VectorXd activity;  ///< a_j, one entry per segment
  int x = 0, y = 0, w = 0, h = 0;  ///< ROI bounding box
  int area = 0;
  int peak_segment = 0;
};

struct FootprintSet {
  int height = 0;
  int width = 0;
  std::vector<Footprint> footprints;

  std::vector<MaskImage> masks() const;
  nlohmann::json manifest(const std::string& masks_file) const;
};

/// Threshold + shape-filter each map, OR them, and run a rank-selected NMF
/// on every connected component of the union.
FootprintSet reconstruct_footprints(const std::vector<ProbabilityMap>& maps, const ReconstructionConfig& config = {});

/// Masks as a paged TIFF plus a JSON manifest next to it.
void save_footprints(const FootprintSet& set, const std::filesystem::path& masks_tif,
                     const std::filesystem::path& manifest_json);

}  // namespace vseg
