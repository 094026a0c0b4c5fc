#include "vseg/regions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace vseg {

std::vector<Component> connected_components(const MaskImage& mask) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
  std::vector<Component> components;
  std::vector<int> stack;
  for (int start = 0; start < h * w; ++start) {
    if (!mask.data()[start] || label[start] >= 0) continue;
    Component c;
    c.top = h;
    c.left = w;
    c.bottom = -1;
    c.right = -1;
    const int id = static_cast<int>(components.size());
    label[start] = id;
    stack.assign(1, start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      c.pixels.push_back(p);
      const int y = p / w, x = p % w;
      c.top = std::min(c.top, y);
      c.bottom = std::max(c.bottom, y);
      c.left = std::min(c.left, x);
      c.right = std::max(c.right, x);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int q = ny * w + nx;
          if (mask.data()[q] && label[q] < 0) {
            label[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
    std::sort(c.pixels.begin(), c.pixels.end());
    components.push_back(std::move(c));
  }
  std::stable_sort(components.begin(), components.end(), [](const Component& a, const Component& b) {
    if (a.top != b.top) return a.top < b.top;
    if (a.left != b.left) return a.left < b.left;
    return a.pixels.front() < b.pixels.front();
  });
  return components;
}

MaskImage component_mask(const Component& component, int height, int width) {
  MaskImage m = MaskImage::Constant(height, width, false);
  for (int p : component.pixels) m.data()[p] = true;
  return m;
}

namespace {

using Point = std::pair<std::int64_t, std::int64_t>;

std::int64_t cross(const Point& o, const Point& a, const Point& b) {
  return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
}

// Convex hull in counter-clockwise order (Andrew's monotone chain).
std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool inside(const std::vector<Point>& hull, const Point& p) {
  for (std::size_t i = 0; i < hull.size(); ++i) {
    if (cross(hull[i], hull[(i + 1) % hull.size()], p) < 0) return false;
  }
  return true;
}

}  // namespace

RegionStats region_stats(const Component& component, int width) {
  RegionStats stats;
  stats.area = component.area();
  if (stats.area == 0) return stats;

  // Only the outermost pixels of each row can be hull vertices.
  const int rows = component.bottom - component.top + 1;
  std::vector<int> row_min(rows, std::numeric_limits<int>::max());
  std::vector<int> row_max(rows, std::numeric_limits<int>::min());
  double sx = 0, sy = 0;
  for (int p : component.pixels) {
    const int y = p / width, x = p % width;
    row_min[y - component.top] = std::min(row_min[y - component.top], x);
    row_max[y - component.top] = std::max(row_max[y - component.top], x);
    sx += x;
    sy += y;
  }
  // Coordinates are doubled to match the pixel-centre lattice below.
  std::vector<Point> corners;
  for (int r = 0; r < rows; ++r) {
    if (row_min[r] > row_max[r]) continue;
    const std::int64_t y = 2 * (component.top + r) + 1;
    corners.insert(corners.end(), {{2 * row_min[r] + 1, y}, {2 * row_max[r] + 1, y}});
  }
  // Hull area counted as the lattice pixels it contains, so digitally convex
  // shapes such as disks and rectangles score exactly 1.
  const std::vector<Point> hull = convex_hull(std::move(corners));
  int hull_pixels = 0;
  for (int y = component.top; y <= component.bottom; ++y) {
    for (int x = component.left; x <= component.right; ++x) hull_pixels += inside(hull, {2 * x + 1, 2 * y + 1});
  }
  stats.solidity = hull_pixels > 0 ? std::min(1.0, static_cast<double>(stats.area) / hull_pixels) : 1.0;

  const double n = stats.area;
  const double mx = sx / n, my = sy / n;
  double cxx = 0, cyy = 0, cxy = 0;
  for (int p : component.pixels) {
    const double dx = p % width - mx, dy = p / width - my;
    cxx += dx * dx;
    cyy += dy * dy;
    cxy += dx * dy;
  }
  // Each pixel is a unit square: add its own variance of 1/12 per axis.
  cxx = cxx / n + 1.0 / 12.0;
  cyy = cyy / n + 1.0 / 12.0;
  cxy /= n;
  const double mid = 0.5 * (cxx + cyy);
  const double rad = std::sqrt(0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy);
  const double major = mid + rad, minor = mid - rad;
  stats.eccentricity = major > 0 ? std::sqrt(std::max(0.0, 1.0 - minor / major)) : 0.0;
  return stats;
}

MaskImage binarize_map(const Image& map, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw NumericError("threshold must lie in (0, 1)");
  return map >= static_cast<float>(threshold);
}

MaskImage filter_regions(const MaskImage& mask, const RegionFilter& filter) {
  MaskImage out = MaskImage::Constant(mask.rows(), mask.cols(), false);
  const int width = static_cast<int>(mask.cols());
  for (const auto& c : connected_components(mask)) {
    if (!filter.accepts(region_stats(c, width))) continue;
    for (int p : c.pixels) out.data()[p] = true;
  }
  return out;
}

MaskImage aggregate_masks(const std::vector<MaskImage>& masks) {
  if (masks.empty()) throw NumericError("aggregate_masks needs at least one mask");
  MaskImage out = masks.front();
  for (std::size_t i = 1; i < masks.size(); ++i) {
    if (masks[i].rows() != out.rows() || masks[i].cols() != out.cols()) {
      throw NumericError("mask " + std::to_string(i) + " dimensions differ");
    }
    out = out || masks[i];
  }
  return out;
}

}  // namespace vseg
