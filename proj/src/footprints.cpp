#include "vseg/footprints.hpp"

#include "vseg/evaluation.hpp"
#include "vseg/parallel.hpp"
#include "vseg/video_io.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace vseg {

std::vector<MaskImage> FootprintSet::masks() const {
  std::vector<MaskImage> out;
  out.reserve(footprints.size());
  for (const auto& f : footprints) out.push_back(f.roi);
  return out;
}

nlohmann::json FootprintSet::manifest(const std::string& masks_file) const {
  nlohmann::json j;
  j["height"] = height;
  j["width"] = width;
  j["masks"] = masks_file;
  j["footprints"] = nlohmann::json::array();
  for (const auto& f : footprints) {
    j["footprints"].push_back({{"id", f.id},
                               {"component", f.component},
                               {"bbox", {f.x, f.y, f.w, f.h}},
                               {"area", f.area},
                               {"peak_segment", f.peak_segment},
                               {"peak_activity", f.activity.size() ? f.activity.maxCoeff() : 0.0}});
  }
  return j;
}

namespace {

std::vector<Footprint> demix_component(const std::vector<ProbabilityMap>& maps, const Component& component,
                                       int component_index, int height, int width,
                                       const ReconstructionConfig& config) {
  const Eigen::Index m = component.area();
  const Eigen::Index k = static_cast<Eigen::Index>(maps.size());
  Eigen::MatrixXd P(m, k);
  for (Eigen::Index s = 0; s < k; ++s) {
    const float* values = maps[s].values.data();
    for (Eigen::Index i = 0; i < m; ++i) P(i, s) = values[component.pixels[i]];
  }
  const int rank = select_rank(P, config.max_rank, config.rank_error, config.nmf);
  const auto fit = nmf(P, rank, config.nmf);

  std::vector<Footprint> found;
  for (int j = 0; j < rank; ++j) {
    const double peak = fit.F.col(j).maxCoeff();
    if (!(peak > 0.0)) continue;
    MaskImage level = MaskImage::Constant(height, width, false);
    Image weights = Image::Zero(height, width);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double v = fit.F(i, j) / peak;
      weights.data()[component.pixels[i]] = static_cast<float>(v);
      if (v >= config.footprint_level) level.data()[component.pixels[i]] = true;
    }
    const auto regions = connected_components(level);
    if (regions.empty()) continue;
    const auto largest = std::max_element(regions.begin(), regions.end(), [](const Component& a, const Component& b) {
      return a.area() < b.area();
    });
    if (!config.filter.accepts(region_stats(*largest, width))) continue;

    Footprint f;
    f.component = component_index;
    f.weights = std::move(weights);
    f.roi = component_mask(*largest, height, width);
    f.activity = fit.A.row(j).transpose() * peak;
    f.x = largest->left;
    f.y = largest->top;
    f.w = largest->right - largest->left + 1;
    f.h = largest->bottom - largest->top + 1;
    f.area = largest->area();
    Eigen::Index arg = 0;
    if (f.activity.size()) f.activity.maxCoeff(&arg);
    f.peak_segment = static_cast<int>(arg);
    found.push_back(std::move(f));
  }

  // Duplicate merge: larger footprints win, survivors keep NMF column order.
  std::vector<std::size_t> order(found.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return found[a].area > found[b].area; });
  std::vector<char> keep(found.size(), false);
  for (std::size_t idx : order) {
    bool duplicate = false;
    for (std::size_t other = 0; other < found.size() && !duplicate; ++other) {
      duplicate = keep[other] && iou(found[idx].roi, found[other].roi) > config.merge_iou;
    }
    keep[idx] = !duplicate;
  }
  std::vector<Footprint> kept;
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (keep[i]) kept.push_back(std::move(found[i]));
  }
  return kept;
}

}  // namespace

FootprintSet reconstruct_footprints(const std::vector<ProbabilityMap>& maps, const ReconstructionConfig& config) {
  if (maps.empty()) throw NumericError("reconstruct_footprints needs at least one probability map");
  FootprintSet set;
  set.height = static_cast<int>(maps.front().values.rows());
  set.width = static_cast<int>(maps.front().values.cols());
  std::vector<MaskImage> cleaned(maps.size());
  parallel_for(maps.size(), config.threads, [&](std::size_t i) {
    if (maps[i].values.rows() != set.height || maps[i].values.cols() != set.width) {
      throw NumericError("probability map " + std::to_string(i) + " dimensions differ");
    }
    cleaned[i] = filter_regions(binarize_map(maps[i].values, config.threshold), config.filter);
  });
  const MaskImage aggregate = aggregate_masks(cleaned);
  const auto components = connected_components(aggregate);

  std::vector<std::vector<Footprint>> per_component(components.size());
  parallel_for(components.size(), config.threads, [&](std::size_t c) {
    per_component[c] = demix_component(maps, components[c], static_cast<int>(c), set.height, set.width, config);
  });
  for (auto& group : per_component) {
    for (auto& f : group) {
      f.id = static_cast<int>(set.footprints.size());
      set.footprints.push_back(std::move(f));
    }
  }
  return set;
}

void save_footprints(const FootprintSet& set, const std::filesystem::path& masks_tif,
                     const std::filesystem::path& manifest_json) {
  save_masks(set.masks(), masks_tif);
  std::ofstream out(manifest_json);
  if (!out) throw IoError("cannot open " + manifest_json.string() + " for writing");
  out << set.manifest(masks_tif.filename().string()).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + manifest_json.string());
}

}  // namespace vseg
