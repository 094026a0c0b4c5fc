#pragma once

#include "vseg/types.hpp"
#include "vseg/video_io.hpp"

#include <cmath>
#include <filesystem>
#include <span>
#include <vector>

namespace vseg {

inline constexpr int kSegmentLength = 50;
inline constexpr double kSummarySigma = 3.0;

/// Read-only view of consecutive frames.
struct TimeSegment {
  std::size_t index = 0;
  int first_frame = 0;
  int frame_count = 0;
  int height = 0;
  int width = 0;
  std::span<const float> data;  ///< frame_count * height * width samples

  Eigen::Map<const Image> frame(int k) const {
    return Eigen::Map<const Image>(data.data() + static_cast<std::size_t>(k) * height * width, height, width);
  }
};

struct SummaryPair {
  Image spatial;
  Image temporal;
  std::size_t segment_index = 0;
};

/// ceil(T / L) segments; the last one may be shorter.
std::vector<TimeSegment> split_segments(const Video& video, int length = kSegmentLength);

/// Segment view over an arbitrary frame buffer (streaming use).
TimeSegment make_segment(std::size_t index, int first_frame, int frame_count, int height, int width,
                         std::span<const float> data);

/// Normalized 1-D Gaussian taps for radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with edge replication.
template <typename Scalar>
ImageT<Scalar> gaussian_smooth(const ImageT<Scalar>& image, double sigma = kSummarySigma) {
  if (!(sigma > 0.0)) throw NumericError("gaussian_smooth: sigma must be positive");
  const std::vector<double> taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  const int h = static_cast<int>(image.rows());
  const int w = static_cast<int>(image.cols());
  std::vector<Scalar> k(taps.begin(), taps.end());

  ImageT<Scalar> horizontal = ImageT<Scalar>::Zero(h, w);
  Eigen::Array<Scalar, Eigen::Dynamic, 1> padded(w + 2 * radius);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w + 2 * radius; ++x) padded[x] = image(y, std::clamp(x - radius, 0, w - 1));
    for (int i = 0; i <= 2 * radius; ++i) horizontal.row(y) += k[i] * padded.segment(i, w).transpose();
  }
  ImageT<Scalar> out = ImageT<Scalar>::Zero(h, w);
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i <= 2 * radius; ++i) {
      out.row(y) += k[i] * horizontal.row(std::clamp(y + i - radius, 0, h - 1));
    }
  }
  return out;
}

/// Per-pixel mean over the segment's frames.
Image spatial_summary(const TimeSegment& segment);

/// Per-pixel max minus median of the Gaussian-smoothed frames. The median of
/// an even count is the midpoint of the two central order statistics.
Image temporal_summary(const TimeSegment& segment, double sigma = kSummarySigma);

SummaryPair summarize_segment(const TimeSegment& segment, double sigma = kSummarySigma);

/// As summarize_segment, but a one-frame tail segment yields a zero temporal
/// image (it carries no temporal contrast) instead of an error.
SummaryPair summarize_any(const TimeSegment& segment);

std::vector<SummaryPair> summarize(const Video& video, int length = kSegmentLength, int threads = 1);

/// Paged float TIFF, spatial and temporal pages interleaved.
void save_summaries(const std::vector<SummaryPair>& pairs, const std::filesystem::path& path);

}  // namespace vseg
