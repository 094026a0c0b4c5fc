#pragma once

#include "vseg/types.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace vseg {

/// Grayscale video stack stored t-major, then y, then x.
class Video {
 public:
  Video() = default;
  /// Zero-filled stack.
  Video(int frames, int height, int width, double frame_rate = 0.0);
  Video(int frames, int height, int width, std::vector<float> data, double frame_rate = 0.0);

  int frames() const noexcept { return frames_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t frame_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const noexcept { return data_.empty(); }

  /// Frames per second; 0 when unknown.
  double frame_rate() const noexcept { return frame_rate_; }
  void set_frame_rate(double fps) noexcept { frame_rate_ = fps; }

  Eigen::Map<const Image> frame(int t) const {
    return Eigen::Map<const Image>(data_.data() + t * frame_size(), height_, width_);
  }
  Eigen::Map<Image> frame(int t) {
    return Eigen::Map<Image>(data_.data() + t * frame_size(), height_, width_);
  }

  float operator()(int t, int y, int x) const { return data_[t * frame_size() + y * width_ + x]; }
  float& operator()(int t, int y, int x) { return data_[t * frame_size() + y * width_ + x]; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  friend bool operator==(const Video& a, const Video& b) {
    return a.frames_ == b.frames_ && a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  double frame_rate_ = 0.0;
  std::vector<float> data_;
};

/// Reads a multi-page TIFF (8/16-bit unsigned or 32-bit float) or a VSEGV1
/// raw stack, detected by content. Values are widened to float unscaled.
Video load_video(const std::filesystem::path& path);

/// Writes VSEGV1 when the extension is `.vsegv1`, float32 multi-page TIFF
/// otherwise.
void save_video(const Video& video, const std::filesystem::path& path);

void save_video_raw(const Video& video, const std::filesystem::path& path);
Video load_video_raw(const std::filesystem::path& path);
void save_video_tiff(const Video& video, const std::filesystem::path& path);

/// One 8-bit page per mask, 0/255. An empty list produces a header-only
/// TIFF that loads back as an empty list.
void save_masks(const std::vector<MaskImage>& masks, const std::filesystem::path& path);
std::vector<MaskImage> load_masks(const std::filesystem::path& path);

/// Float32 pages, e.g. interleaved summary images.
void save_images(const std::vector<Image>& images, const std::filesystem::path& path);
std::vector<Image> load_images(const std::filesystem::path& path);

}  // namespace vseg
