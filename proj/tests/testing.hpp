#pragma once

#include "vseg/types.hpp"

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

namespace vseg::testing {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("vseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(std::mt19937_64& rng, int h, int w, float lo = 0.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Image out(h, w);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = dist(rng);
  return out;
}

inline MaskImage disk(int h, int w, double cx, double cy, double r) {
  MaskImage m(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) m(y, x) = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  }
  return m;
}

}  // namespace vseg::testing
