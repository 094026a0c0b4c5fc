#pragma once

#include "vseg/types.hpp"
#include "vseg/video_io.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

namespace vseg {

/// Displacement of a frame's content relative to the reference:
/// frame(x, y) ~ reference(x - dx, y - dy).
struct MotionVector {
  int dx = 0;
  int dy = 0;
  double sub_x = 0.0;  ///< subpixel refinement, in (-1, 1)
  double sub_y = 0.0;
  double confidence = 0.0;  ///< mean patch ZNCC at (dx, dy)

  double x() const { return dx + sub_x; }
  double y() const { return dy + sub_y; }
};

/// Square patches tiling a frame region. Origins are (x, y) of the top-left pixel.
struct PatchGrid {
  int patch_size = 21;
  int stride = 21;
  std::vector<Eigen::Vector2i> origins;

  /// Non-overlapping tiling of the frame inset by `margin` on every side,
  /// with a last row/column flush to the inset edge.
  static PatchGrid tile(int width, int height, int patch_size, int margin);
};

/// Zero-mean normalized cross-correlation of two equally sized windows.
/// Returns 0 when either window has zero variance.
template <typename DerivedA, typename DerivedB>
double zncc(const Eigen::DenseBase<DerivedA>& a, const Eigen::DenseBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw NumericError("zncc: window dimensions differ");
  const double n = static_cast<double>(a.size());
  if (n == 0) return 0.0;
  const Eigen::ArrayXXd ad = a.derived().template cast<double>().array();
  const Eigen::ArrayXXd bd = b.derived().template cast<double>().array();
  const double ma = ad.sum() / n;
  const double mb = bd.sum() / n;
  const double cov = ((ad - ma) * (bd - mb)).sum();
  const double va = (ad - ma).square().sum();
  const double vb = (bd - mb).square().sum();
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

/// Summed-area tables of values and squared values with one row/column of
/// zero padding, so rectangle sums need no bounds checks.
template <typename Accum = double>
class AreaTables {
 public:
  AreaTables() = default;

  template <typename Derived>
  explicit AreaTables(const Eigen::DenseBase<Derived>& frame) {
    const Eigen::Index h = frame.rows();
    const Eigen::Index w = frame.cols();
    sum_ = ImageT<Accum>::Zero(h + 1, w + 1);
    sq_ = ImageT<Accum>::Zero(h + 1, w + 1);
    for (Eigen::Index y = 0; y < h; ++y) {
      Accum row = 0, row_sq = 0;
      for (Eigen::Index x = 0; x < w; ++x) {
        const Accum v = static_cast<Accum>(frame(y, x));
        row += v;
        row_sq += v * v;
        sum_(y + 1, x + 1) = sum_(y, x + 1) + row;
        sq_(y + 1, x + 1) = sq_(y, x + 1) + row_sq;
      }
    }
  }

  Eigen::Index rows() const { return sum_.rows() - 1; }
  Eigen::Index cols() const { return sum_.cols() - 1; }

  /// Sum over the w-by-h rectangle with top-left corner (x, y).
  Accum sum(int x, int y, int w, int h) const { return rect(sum_, x, y, w, h); }
  Accum sum_squares(int x, int y, int w, int h) const { return rect(sq_, x, y, w, h); }

  const ImageT<Accum>& sum_table() const { return sum_; }

 private:
  static Accum rect(const ImageT<Accum>& t, int x, int y, int w, int h) {
    return t(y + h, x + w) - t(y, x + w) - t(y + h, x) + t(y, x);
  }

  ImageT<Accum> sum_;
  ImageT<Accum> sq_;
};

template <typename Derived>
AreaTables<double> build_area_tables(const Eigen::DenseBase<Derived>& frame) {
  return AreaTables<double>(frame);
}

struct MotionConfig {
  int patch_size = 21;
  int search_radius = 10;
  bool subpixel = true;
  int reference_frames = 50;
  int threads = 1;
};

/// Exhaustive patch-ZNCC translation search against a fixed reference.
/// Reference window statistics come from area tables; only the cross term
/// is accumulated per candidate.
class MotionEstimator {
 public:
  MotionEstimator(const Image& reference, PatchGrid grid, int search_radius, bool subpixel = true);
  MotionEstimator(const Image& reference, const MotionConfig& config);

  /// Mean patch ZNCC per candidate, indexed (dy + r, dx + r).
  ImageD score_candidates(const Eigen::Ref<const Image>& frame) const;
  MotionVector estimate(const Eigen::Ref<const Image>& frame) const;

  const Image& reference() const { return reference_; }
  const PatchGrid& grid() const { return grid_; }
  int search_radius() const { return radius_; }

 private:
  Image reference_;
  static constexpr int kLanes = 32;

  Image centered_;  // reference minus its global mean
  Image padded_;    // centered_ plus zero columns for whole lane blocks
  AreaTables<double> tables_;
  ImageD ref_energy_;  // per patch, per candidate centred window energy
  int lane_blocks_ = 1;
  PatchGrid grid_;
  int radius_;
  bool subpixel_;
};

MotionVector estimate_motion(const Image& frame, const Image& reference, const PatchGrid& grid, int search_radius,
                             bool subpixel = true);

/// out(x, y) = frame(x + dx, y + dy), bilinear for fractional shifts, with
/// edge replication. Integer shifts copy samples exactly.
Image translate_frame(const Eigen::Ref<const Image>& frame, double dx, double dy);

/// Temporal mean of the first min(T, count) frames.
Image mean_reference(const Video& video, int count);

struct MotionCorrection {
  Video corrected;
  std::vector<MotionVector> motion;
};

MotionCorrection correct_motion(const Video& video, const MotionConfig& config = {});

/// Shifts a frame back by the estimated motion.
Image apply_correction(const Eigen::Ref<const Image>& frame, const MotionVector& motion, bool subpixel);

/// CSV with header `frame,dx,dy,confidence`; dx/dy include subpixel parts.
void write_motion_csv(const std::vector<MotionVector>& motion, const std::filesystem::path& path);

}  // namespace vseg
