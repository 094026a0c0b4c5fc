#include "vseg/motion.hpp"

#include "vseg/parallel.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>

namespace vseg {

PatchGrid PatchGrid::tile(int width, int height, int patch_size, int margin) {
  if (patch_size < 1) throw NumericError("patch size must be positive");
  const int inner_w = width - 2 * margin;
  const int inner_h = height - 2 * margin;
  if (inner_w < patch_size || inner_h < patch_size) {
    throw NumericError("frame " + std::to_string(width) + "x" + std::to_string(height) +
                       " is smaller than patch_size + 2*search_radius = " + std::to_string(patch_size + 2 * margin));
  }
  auto starts = [&](int inner) {
    std::vector<int> s;
    for (int p = 0; p + patch_size <= inner; p += patch_size) s.push_back(margin + p);
    if (s.back() + patch_size < margin + inner) s.push_back(margin + inner - patch_size);
    return s;
  };
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.stride = patch_size;
  for (int y : starts(inner_h)) {
    for (int x : starts(inner_w)) grid.origins.emplace_back(x, y);
  }
  return grid;
}

MotionEstimator::MotionEstimator(const Image& reference, PatchGrid grid, int search_radius, bool subpixel)
    : reference_(reference), grid_(std::move(grid)), radius_(search_radius), subpixel_(subpixel) {
  if (search_radius < 1) throw NumericError("search radius must be at least 1");
  const int ps = grid_.patch_size;
  for (const auto& o : grid_.origins) {
    if (o.x() - radius_ < 0 || o.y() - radius_ < 0 || o.x() + ps + radius_ > reference.cols() ||
        o.y() + ps + radius_ > reference.rows()) {
      throw NumericError("patch grid leaves no room for the search radius; frame smaller than patch_size + 2*radius");
    }
  }
  const double mean = reference.cast<double>().mean();
  centered_ = (reference.cast<double>() - mean).cast<float>();
  tables_ = AreaTables<double>(centered_);

  // Zero columns on the right let the cross-term loop run whole lane blocks.
  const int span = 2 * radius_ + 1;
  lane_blocks_ = (span + kLanes - 1) / kLanes;
  padded_ = Image::Zero(centered_.rows(), centered_.cols() + lane_blocks_ * kLanes);
  padded_.leftCols(centered_.cols()) = centered_;

  // Reference window energies do not depend on the frame.
  const double n = static_cast<double>(ps) * ps;
  ref_energy_ = ImageD::Zero(static_cast<Eigen::Index>(grid_.origins.size()), span * span);
  for (std::size_t p = 0; p < grid_.origins.size(); ++p) {
    const auto& o = grid_.origins[p];
    for (int dyi = 0; dyi < span; ++dyi) {
      for (int dxi = 0; dxi < span; ++dxi) {
        const int rx = o.x() - (dxi - radius_);
        const int ry = o.y() - (dyi - radius_);
        const double sum = tables_.sum(rx, ry, ps, ps);
        const double sq = tables_.sum_squares(rx, ry, ps, ps);
        const double energy = sq - sum * sum / n;
        ref_energy_(p, dyi * span + dxi) = energy <= 1e-10 * sq + std::numeric_limits<double>::min() ? 0.0 : energy;
      }
    }
  }
}

MotionEstimator::MotionEstimator(const Image& reference, const MotionConfig& config)
    : MotionEstimator(reference,
                      PatchGrid::tile(static_cast<int>(reference.cols()), static_cast<int>(reference.rows()),
                                      config.patch_size, config.search_radius),
                      config.search_radius, config.subpixel) {}

namespace {

// 16 floats; lowered to one AVX-512 register or split on narrower targets.
typedef float Lane16 __attribute__((vector_size(64)));

inline Lane16 load16(const float* p) {
  Lane16 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

// out[q][k] = sum_ij patch(i, j) * ref(row0 - q*pitch + i*pitch + j + k) for
// Rows consecutive dy candidates and 32 consecutive dx candidates.
template <int Rows>
void cross_rows(const float* patch, int ps, const float* row0, std::ptrdiff_t pitch, float* out,
                std::size_t out_stride) {
  Lane16 lo[Rows], hi[Rows];
#pragma GCC unroll 4
  for (int q = 0; q < Rows; ++q) lo[q] = hi[q] = Lane16{};
  for (int i = 0; i < ps; ++i) {
    const float* row = row0 + i * pitch;
    for (int j = 0; j < ps; ++j) {
      const float w = patch[i * ps + j];
#pragma GCC unroll 4
      for (int q = 0; q < Rows; ++q) {
        lo[q] += w * load16(row - q * pitch + j);
        hi[q] += w * load16(row - q * pitch + j + 16);
      }
    }
  }
#pragma GCC unroll 4
  for (int q = 0; q < Rows; ++q) {
    std::memcpy(out + q * out_stride, &lo[q], sizeof(Lane16));
    std::memcpy(out + q * out_stride + 16, &hi[q], sizeof(Lane16));
  }
}

}  // namespace

ImageD MotionEstimator::score_candidates(const Eigen::Ref<const Image>& frame) const {
  if (frame.rows() != reference_.rows() || frame.cols() != reference_.cols()) {
    throw NumericError("frame and reference dimensions differ");
  }
  const int r = radius_;
  const int span = 2 * r + 1;
  const int ps = grid_.patch_size;
  const Eigen::Index pitch = padded_.cols();
  ImageD total = ImageD::Zero(span, span);
  Image patch(ps, ps);
  std::vector<float> acc(static_cast<std::size_t>(span) * lane_blocks_ * kLanes);

  for (std::size_t p = 0; p < grid_.origins.size(); ++p) {
    const int px = grid_.origins[p].x();
    const int py = grid_.origins[p].y();
    const auto window = frame.block(py, px, ps, ps).cast<double>();
    const double mean = window.mean();
    patch = (window - mean).cast<float>();
    const double patch_energy = patch.cast<double>().square().sum();
    if (patch_energy <= 0.0) continue;

    // Cross terms for every candidate. Lane k is dx = r - k, whose reference
    // window starts at x = px - r + k; four dy rows run together to keep
    // independent accumulators in flight.
    for (int b = 0; b < lane_blocks_; ++b) {
      const float* base = padded_.data() + (px - r) + b * kLanes;
      for (int dyi = 0; dyi < span; dyi += 4) {
        // Candidate dy = dyi - r reads reference row py - dy + i.
        const float* row0 = base + static_cast<std::size_t>(py + r - dyi) * pitch;
        float* out = acc.data() + (static_cast<std::size_t>(dyi) * lane_blocks_ + b) * kLanes;
        const std::size_t out_stride = static_cast<std::size_t>(lane_blocks_) * kLanes;
        switch (std::min(4, span - dyi)) {
          case 4: cross_rows<4>(patch.data(), ps, row0, pitch, out, out_stride); break;
          case 3: cross_rows<3>(patch.data(), ps, row0, pitch, out, out_stride); break;
          case 2: cross_rows<2>(patch.data(), ps, row0, pitch, out, out_stride); break;
          default: cross_rows<1>(patch.data(), ps, row0, pitch, out, out_stride); break;
        }
      }
    }

    for (int dyi = 0; dyi < span; ++dyi) {
      const float* row = acc.data() + static_cast<std::size_t>(dyi) * lane_blocks_ * kLanes;
      for (int k = 0; k < span; ++k) {
        const int dx = r - k;
        const double ref_energy = ref_energy_(p, dyi * span + dx + r);
        if (ref_energy == 0.0) continue;
        const double z = static_cast<double>(row[k]) / std::sqrt(patch_energy * ref_energy);
        total(dyi, dx + r) += std::clamp(z, -1.0, 1.0);
      }
    }
  }
  return total / static_cast<double>(grid_.origins.size());
}

namespace {

// Vertex of the parabola through (-1, left), (0, mid), (1, right).
double parabola_peak(double left, double mid, double right) {
  const double denom = left - 2.0 * mid + right;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

}  // namespace

MotionVector MotionEstimator::estimate(const Eigen::Ref<const Image>& frame) const {
  const ImageD scores = score_candidates(frame);
  const int r = radius_;
  const int span = 2 * r + 1;
  int best_x = r, best_y = r;
  double best = -std::numeric_limits<double>::infinity();
  auto rank = [&](int xi, int yi) { return std::abs(xi - r) + std::abs(yi - r); };
  for (int yi = 0; yi < span; ++yi) {
    for (int xi = 0; xi < span; ++xi) {
      const double s = scores(yi, xi);
      bool take = s > best;
      if (s == best) {
        // ties: smaller |dx|+|dy|, then smaller dy, then smaller dx
        const int a = rank(xi, yi), b = rank(best_x, best_y);
        take = a < b || (a == b && (yi < best_y || (yi == best_y && xi < best_x)));
      }
      if (take) {
        best = s;
        best_x = xi;
        best_y = yi;
      }
    }
  }
  MotionVector mv;
  mv.dx = best_x - r;
  mv.dy = best_y - r;
  mv.confidence = best;
  if (subpixel_ && best < 1.0 - 1e-9) {
    if (best_x > 0 && best_x < span - 1) {
      mv.sub_x = parabola_peak(scores(best_y, best_x - 1), best, scores(best_y, best_x + 1));
    }
    if (best_y > 0 && best_y < span - 1) {
      mv.sub_y = parabola_peak(scores(best_y - 1, best_x), best, scores(best_y + 1, best_x));
    }
  }
  return mv;
}

MotionVector estimate_motion(const Image& frame, const Image& reference, const PatchGrid& grid, int search_radius,
                             bool subpixel) {
  if (frame.rows() != reference.rows() || frame.cols() != reference.cols()) {
    throw NumericError("frame and reference dimensions differ");
  }
  if (frame.cols() < grid.patch_size + 2 * search_radius || frame.rows() < grid.patch_size + 2 * search_radius) {
    throw NumericError("frame smaller than patch_size + 2*search_radius");
  }
  return MotionEstimator(reference, grid, search_radius, subpixel).estimate(frame);
}

Image translate_frame(const Eigen::Ref<const Image>& frame, double dx, double dy) {
  const int h = static_cast<int>(frame.rows());
  const int w = static_cast<int>(frame.cols());
  Image out(h, w);
  const double fx0 = std::floor(dx);
  const double fy0 = std::floor(dy);
  const int ix = static_cast<int>(fx0);
  const int iy = static_cast<int>(fy0);
  const float ax = static_cast<float>(dx - fx0);
  const float ay = static_cast<float>(dy - fy0);
  auto cx = [w](int x) { return std::clamp(x, 0, w - 1); };
  auto cy = [h](int y) { return std::clamp(y, 0, h - 1); };

  if (ax == 0.0f && ay == 0.0f) {
    for (int y = 0; y < h; ++y) {
      const int sy = cy(y + iy);
      for (int x = 0; x < w; ++x) out(y, x) = frame(sy, cx(x + ix));
    }
    return out;
  }
  for (int y = 0; y < h; ++y) {
    const int y0 = cy(y + iy);
    const int y1 = cy(y + iy + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = cx(x + ix);
      const int x1 = cx(x + ix + 1);
      const float top = frame(y0, x0) + ax * (frame(y0, x1) - frame(y0, x0));
      const float bottom = frame(y1, x0) + ax * (frame(y1, x1) - frame(y1, x0));
      out(y, x) = top + ay * (bottom - top);
    }
  }
  return out;
}

Image mean_reference(const Video& video, int count) {
  const int n = std::clamp(count, 1, video.frames());
  ImageD acc = ImageD::Zero(video.height(), video.width());
  for (int t = 0; t < n; ++t) acc += video.frame(t).cast<double>();
  return (acc / n).cast<float>();
}

Image apply_correction(const Eigen::Ref<const Image>& frame, const MotionVector& motion, bool subpixel) {
  if (subpixel) return translate_frame(frame, motion.x(), motion.y());
  return translate_frame(frame, motion.dx, motion.dy);
}

MotionCorrection correct_motion(const Video& video, const MotionConfig& config) {
  const Image reference = mean_reference(video, config.reference_frames);
  const MotionEstimator estimator(reference, config);
  MotionCorrection result{Video(video.frames(), video.height(), video.width(), video.frame_rate()),
                          std::vector<MotionVector>(video.frames())};
  parallel_for(static_cast<std::size_t>(video.frames()), config.threads, [&](std::size_t t) {
    const int ti = static_cast<int>(t);
    const Image frame = video.frame(ti);
    result.motion[t] = estimator.estimate(frame);
    result.corrected.frame(ti) = apply_correction(frame, result.motion[t], config.subpixel);
  });
  return result;
}

void write_motion_csv(const std::vector<MotionVector>& motion, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "frame,dx,dy,confidence\n" << std::setprecision(9);
  for (std::size_t t = 0; t < motion.size(); ++t) {
    out << t << ',' << motion[t].x() << ',' << motion[t].y() << ',' << motion[t].confidence << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace vseg
