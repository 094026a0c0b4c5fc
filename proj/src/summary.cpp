#include "vseg/summary.hpp"

#include "vseg/parallel.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <utility>

namespace vseg {

std::vector<TimeSegment> split_segments(const Video& video, int length) {
  if (length < 2) throw NumericError("segment length must be at least 2, got " + std::to_string(length));
  std::vector<TimeSegment> segments;
  const std::size_t frame = video.frame_size();
  for (int first = 0, i = 0; first < video.frames(); first += length, ++i) {
    const int count = std::min(length, video.frames() - first);
    segments.push_back(make_segment(static_cast<std::size_t>(i), first, count, video.height(), video.width(),
                                    video.data().subspan(first * frame, count * frame)));
  }
  return segments;
}

TimeSegment make_segment(std::size_t index, int first_frame, int frame_count, int height, int width,
                         std::span<const float> data) {
  if (frame_count < 1) throw NumericError("segment must hold at least one frame");
  if (data.size() != static_cast<std::size_t>(frame_count) * height * width) {
    throw NumericError("segment buffer size does not match its dimensions");
  }
  return TimeSegment{index, first_frame, frame_count, height, width, data};
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += taps[i + radius];
  }
  for (double& t : taps) t /= total;
  return taps;
}

Image spatial_summary(const TimeSegment& segment) {
  ImageD acc = ImageD::Zero(segment.height, segment.width);
  for (int k = 0; k < segment.frame_count; ++k) acc += segment.frame(k).cast<double>();
  return (acc / segment.frame_count).cast<float>();
}

namespace {

// Batcher odd-even merge sort for the next power of two, with comparators
// that touch padding (conceptually +inf) removed.
std::vector<std::pair<int, int>> build_network(int n) {
  int size = 1;
  while (size < n) size *= 2;
  std::vector<std::pair<int, int>> out;
  for (int p = 1; p < size; p *= 2) {
    for (int k = p; k >= 1; k /= 2) {
      for (int j = k % p; j + k < size; j += 2 * k) {
        for (int i = 0; i < std::min(k, size - j - k); ++i) {
          const int a = i + j, b = i + j + k;
          if ((a / (2 * p)) == (b / (2 * p)) && b < n) out.emplace_back(a, b);
        }
      }
    }
  }
  return out;
}

const std::vector<std::pair<int, int>>& sorting_network(int n) {
  static std::mutex mutex;
  static std::map<int, std::vector<std::pair<int, int>>> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_network(n)).first;
  return it->second;
}

}  // namespace

Image temporal_summary(const TimeSegment& segment, double sigma) {
  if (segment.frame_count < 2) {
    throw NumericError("temporal summary needs at least 2 frames, segment " + std::to_string(segment.index) +
                       " has " + std::to_string(segment.frame_count));
  }
  const int n = segment.frame_count;
  const std::size_t pixels = static_cast<std::size_t>(segment.height) * segment.width;
  std::vector<float> smoothed(pixels * n);
  for (int k = 0; k < n; ++k) {
    Eigen::Map<Image>(smoothed.data() + k * pixels, segment.height, segment.width) =
        gaussian_smooth<float>(Image(segment.frame(k)), sigma);
  }

  // Sort each pixel's series with a sorting network, a block of pixels at a
  // time, so every compare-exchange is a vector min/max across pixels.
  const auto& network = sorting_network(n);
  constexpr std::size_t kBlock = 64;
  std::vector<float> buf(static_cast<std::size_t>(n) * kBlock);
  Image out(segment.height, segment.width);
  for (std::size_t p0 = 0; p0 < pixels; p0 += kBlock) {
    const std::size_t m = std::min(kBlock, pixels - p0);
    for (int k = 0; k < n; ++k) std::copy_n(smoothed.data() + k * pixels + p0, m, buf.data() + k * kBlock);
    for (const auto& [a, b] : network) {
      float* lo = buf.data() + a * kBlock;
      float* hi = buf.data() + b * kBlock;
      for (std::size_t q = 0; q < kBlock; ++q) {
        const float x = lo[q], y = hi[q];
        lo[q] = std::min(x, y);
        hi[q] = std::max(x, y);
      }
    }
    const float* top = buf.data() + static_cast<std::size_t>(n - 1) * kBlock;
    const float* mid = buf.data() + static_cast<std::size_t>(n / 2) * kBlock;
    const float* below = buf.data() + static_cast<std::size_t>((n - 1) / 2) * kBlock;
    for (std::size_t q = 0; q < m; ++q) {
      const float median = n % 2 ? mid[q] : 0.5f * (mid[q] + below[q]);
      out.data()[p0 + q] = std::max(top[q] - median, 0.0f);
    }
  }
  return out;
}

SummaryPair summarize_segment(const TimeSegment& segment, double sigma) {
  return SummaryPair{spatial_summary(segment), temporal_summary(segment, sigma), segment.index};
}

SummaryPair summarize_any(const TimeSegment& segment) {
  if (segment.frame_count == 1) {
    return SummaryPair{spatial_summary(segment), Image::Zero(segment.height, segment.width), segment.index};
  }
  return summarize_segment(segment);
}

std::vector<SummaryPair> summarize(const Video& video, int length, int threads) {
  const auto segments = split_segments(video, length);
  std::vector<SummaryPair> pairs(segments.size());
  parallel_for(segments.size(), threads, [&](std::size_t i) { pairs[i] = summarize_any(segments[i]); });
  return pairs;
}

void save_summaries(const std::vector<SummaryPair>& pairs, const std::filesystem::path& path) {
  std::vector<Image> pages;
  pages.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    pages.push_back(p.spatial);
    pages.push_back(p.temporal);
  }
  save_images(pages, path);
}

}  // namespace vseg
