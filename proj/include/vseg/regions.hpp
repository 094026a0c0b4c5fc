#pragma once

#include "vseg/types.hpp"

#include <vector>

namespace vseg {

/// 8-connected set of on-pixels. `pixels` are linear indices y * width + x
/// in raster order.
struct Component {
  std::vector<int> pixels;
  int top = 0;
  int left = 0;
  int bottom = 0;  ///< inclusive
  int right = 0;   ///< inclusive

  int area() const { return static_cast<int>(pixels.size()); }
};

/// Components ordered by (top, left) of their bounding boxes.
std::vector<Component> connected_components(const MaskImage& mask);

MaskImage component_mask(const Component& component, int height, int width);

struct RegionStats {
  int area = 0;
  double solidity = 1.0;      ///< area / pixels inside the convex hull of the pixel centres
  double eccentricity = 0.0;  ///< of the second-moment ellipse of the pixel squares
};

RegionStats region_stats(const Component& component, int width);

struct RegionFilter {
  int min_area = 40;
  int max_area = 2000;
  double min_solidity = 0.8;
  double max_eccentricity = 0.95;

  bool accepts(const RegionStats& stats) const {
    return stats.area >= min_area && stats.area <= max_area && stats.solidity >= min_solidity &&
           stats.eccentricity <= max_eccentricity;
  }
};

/// p >= threshold; threshold must lie in (0, 1).
MaskImage binarize_map(const Image& map, double threshold = 0.5);

/// Keeps the 8-connected regions that satisfy `filter`.
MaskImage filter_regions(const MaskImage& mask, const RegionFilter& filter);

/// Pixelwise OR. An empty list has no defined size and is rejected.
MaskImage aggregate_masks(const std::vector<MaskImage>& masks);

}  // namespace vseg
