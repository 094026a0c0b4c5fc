#pragma once

#include "vseg/summary.hpp"
#include "vseg/types.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vseg {

inline constexpr int kPatchSize = 64;
inline constexpr int kInputChannels = 2;
inline constexpr int kMergeStride = 32;

struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  std::size_t size() const;
};

/// The fixed network: three encoder levels of widths 16/32/64 (two 3x3
/// conv + ReLU each, 2x2 max-pool between levels), a mirrored decoder with
/// nearest-neighbour upsampling and [upsampled, skip] channel concatenation,
/// and a 1x1 conv + sigmoid head.
struct Architecture {
  int patch_size = kPatchSize;
  int in_channels = kInputChannels;
  std::vector<int> widths;
  std::vector<TensorSpec> tensors;  ///< canonical order
  std::string fingerprint;

  std::size_t parameter_count() const;
  const TensorSpec* find(const std::string& name) const;
};

const Architecture& unet_architecture();

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;  ///< row-major; conv kernels are (out, in, ky, kx)
};

struct WeightBundle {
  std::string fingerprint;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  NamedTensor* find(const std::string& name);
};

/// Throws NumericError naming the first missing, unexpected, misshapen or
/// non-finite tensor, or a fingerprint mismatch.
void validate_weights(const WeightBundle& bundle);

WeightBundle zero_weights();
/// He-normal kernels and small random biases; deterministic in `seed`.
WeightBundle random_weights(std::uint64_t seed);

/// VSEGW1 codec. Loading verifies the fingerprint and every tensor and
/// returns tensors in canonical order.
WeightBundle load_weights(const std::filesystem::path& path);
void save_weights(const WeightBundle& bundle, const std::filesystem::path& path);
std::vector<char> encode_weights(const WeightBundle& bundle);
WeightBundle decode_weights(std::vector<char> bytes, const std::string& source = "weights");

/// Channels x (height * width), row-major.
using FeatureMap = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class UNet {
 public:
  explicit UNet(const WeightBundle& weights);

  /// `patch` is 2 x (64*64); returns 64x64 probabilities in (0, 1).
  Image forward(const FeatureMap& patch) const;

 private:
  struct Conv {
    FeatureMap kernel;  // out x (in * k * k)
    std::array<FeatureMap, 9> taps;  // 3x3 only: out x in per (ky, kx)
    Eigen::VectorXf bias;
    int in = 0;
    int out = 0;
    int size = 3;
  };

  static Conv take(const WeightBundle& weights, const std::string& prefix, int in, int out, int size);
  static FeatureMap conv3x3_relu(const Conv& conv, const FeatureMap& x, int h, int w);

  std::array<std::array<Conv, 2>, 3> enc_;
  std::array<std::array<Conv, 2>, 2> dec_;  // dec_[0] = level 1, dec_[1] = level 2
  Conv head_;
};

Image forward(const WeightBundle& weights, const FeatureMap& patch);

using NormalizedPair = std::array<Image, 2>;

/// Linear-interpolated percentile, q in [0, 1].
double percentile(std::vector<float> values, double q);

/// (v - p1) / (p99 - p1) clamped to [0, 1]; all zeros when p99 <= p1.
Image normalize_channel(const Image& channel);
NormalizedPair normalize_pair(const SummaryPair& pair);

struct ProbabilityMap {
  std::size_t segment_index = 0;
  Image values;
};

/// Patch origins along one axis: multiples of `stride`, plus one flush to the end.
std::vector<int> patch_starts(int extent, int patch, int stride);

/// Separable tent window peaking at the patch centre, floored at 1e-3.
Image merge_weights(int patch = kPatchSize);

/// Sliding-window inference with weighted-average merging. Frames smaller
/// than 64 px are reflect-padded and cropped back.
ProbabilityMap tile_and_merge(const UNet& net, const NormalizedPair& input, std::size_t segment_index,
                              int stride = kMergeStride, int threads = 1);
ProbabilityMap tile_and_merge(const UNet& net, const SummaryPair& pair, int stride = kMergeStride,
                              int threads = 1);

}  // namespace vseg
