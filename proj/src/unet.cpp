#include "vseg/unet.hpp"

#include "vseg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

namespace vseg {

std::size_t TensorSpec::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::size_t Architecture::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

const TensorSpec* Architecture::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

namespace {

Architecture build_architecture() {
  Architecture arch;
  arch.widths = {16, 32, 64};
  auto add_conv = [&](const std::string& prefix, int in, int out, int k) {
    arch.tensors.push_back({prefix + ".kernel", {out, in, k, k}});
    arch.tensors.push_back({prefix + ".bias", {out}});
  };
  int in = arch.in_channels;
  for (std::size_t level = 0; level < arch.widths.size(); ++level) {
    const std::string name = "enc" + std::to_string(level + 1);
    add_conv(name + ".conv1", in, arch.widths[level], 3);
    add_conv(name + ".conv2", arch.widths[level], arch.widths[level], 3);
    in = arch.widths[level];
  }
  for (int level = static_cast<int>(arch.widths.size()) - 1; level >= 1; --level) {
    const int out = arch.widths[level - 1];
    const std::string name = "dec" + std::to_string(level);
    add_conv(name + ".conv1", in + out, out, 3);
    add_conv(name + ".conv2", out, out, 3);
    in = out;
  }
  add_conv("out.conv", in, 1, 1);
  arch.fingerprint =
      "vseg-unet/1;input=2x64x64;widths=16,32,64;block=conv3x3+relu*2;down=maxpool2;"
      "up=nearest2;skip=concat(up,skip);head=conv1x1+sigmoid;layout=oihw";
  return arch;
}

}  // namespace

const Architecture& unet_architecture() {
  static const Architecture arch = build_architecture();
  return arch;
}

const NamedTensor* WeightBundle::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

NamedTensor* WeightBundle::find(const std::string& name) {
  for (auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void validate_weights(const WeightBundle& bundle) {
  const Architecture& arch = unet_architecture();
  if (bundle.fingerprint != arch.fingerprint) {
    throw NumericError("weight fingerprint mismatch: got '" + bundle.fingerprint + "'");
  }
  for (const auto& spec : arch.tensors) {
    const NamedTensor* t = bundle.find(spec.name);
    if (!t) throw NumericError("weights are missing tensor " + spec.name);
    if (t->shape != spec.shape) throw NumericError("tensor " + spec.name + " has the wrong shape");
    if (t->values.size() != spec.size()) throw NumericError("tensor " + spec.name + " has the wrong value count");
    for (float v : t->values) {
      if (!std::isfinite(v)) throw NumericError("tensor " + spec.name + " holds a non-finite value");
    }
  }
  for (const auto& t : bundle.tensors) {
    if (!arch.find(t.name)) throw NumericError("unexpected tensor " + t.name);
  }
  if (bundle.tensors.size() != arch.tensors.size()) throw NumericError("duplicate tensors in weight bundle");
}

WeightBundle zero_weights() {
  const Architecture& arch = unet_architecture();
  WeightBundle bundle{arch.fingerprint, {}};
  for (const auto& spec : arch.tensors) bundle.tensors.push_back({spec.name, spec.shape, std::vector<float>(spec.size())});
  return bundle;
}

WeightBundle random_weights(std::uint64_t seed) {
  WeightBundle bundle = zero_weights();
  std::mt19937_64 rng(seed);
  for (auto& t : bundle.tensors) {
    if (t.shape.size() == 4) {
      const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
      std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
      for (float& v : t.values) v = dist(rng);
    } else {
      std::uniform_real_distribution<float> dist(-0.1f, 0.1f);
      for (float& v : t.values) v = dist(rng);
    }
  }
  return bundle;
}

UNet::Conv UNet::take(const WeightBundle& weights, const std::string& prefix, int in, int out, int size) {
  const NamedTensor* k = weights.find(prefix + ".kernel");
  const NamedTensor* b = weights.find(prefix + ".bias");
  Conv conv;
  conv.in = in;
  conv.out = out;
  conv.size = size;
  conv.kernel = Eigen::Map<const FeatureMap>(k->values.data(), out, in * size * size);
  conv.bias = Eigen::Map<const Eigen::VectorXf>(b->values.data(), out);
  if (size == 3) {
    for (int t = 0; t < 9; ++t) {
      conv.taps[t].resize(out, in);
      for (int c = 0; c < in; ++c) conv.taps[t].col(c) = conv.kernel.col(c * 9 + t);
    }
  }
  return conv;
}

UNet::UNet(const WeightBundle& weights) {
  validate_weights(weights);
  const auto& widths = unet_architecture().widths;
  int in = kInputChannels;
  for (int level = 0; level < 3; ++level) {
    const std::string name = "enc" + std::to_string(level + 1);
    enc_[level][0] = take(weights, name + ".conv1", in, widths[level], 3);
    enc_[level][1] = take(weights, name + ".conv2", widths[level], widths[level], 3);
    in = widths[level];
  }
  for (int level = 2; level >= 1; --level) {
    const int out = widths[level - 1];
    const std::string name = "dec" + std::to_string(level);
    dec_[level - 1][0] = take(weights, name + ".conv1", in + out, out, 3);
    dec_[level - 1][1] = take(weights, name + ".conv2", out, out, 3);
    in = out;
  }
  head_ = take(weights, "out.conv", in, 1, 1);
}

namespace {

FeatureMap max_pool2(const FeatureMap& x, int h, int w) {
  const int oh = h / 2, ow = w / 2;
  FeatureMap out(x.rows(), static_cast<Eigen::Index>(oh) * ow);
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    const float* s = x.row(c).data();
    float* d = out.row(c).data();
    for (int y = 0; y < oh; ++y) {
      const float* r0 = s + static_cast<std::size_t>(2 * y) * w;
      const float* r1 = r0 + w;
      for (int xx = 0; xx < ow; ++xx) {
        d[y * ow + xx] = std::max(std::max(r0[2 * xx], r0[2 * xx + 1]), std::max(r1[2 * xx], r1[2 * xx + 1]));
      }
    }
  }
  return out;
}

// Nearest-neighbour 2x upsampling of `x` (h x w) stacked on top of `skip` (2h x 2w).
FeatureMap upsample_concat(const FeatureMap& x, int h, int w, const FeatureMap& skip) {
  const int oh = 2 * h, ow = 2 * w;
  FeatureMap out(x.rows() + skip.rows(), static_cast<Eigen::Index>(oh) * ow);
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    const float* s = x.row(c).data();
    float* d = out.row(c).data();
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) d[y * ow + xx] = s[(y / 2) * w + xx / 2];
    }
  }
  out.bottomRows(skip.rows()) = skip;
  return out;
}

}  // namespace

// Each tap is one GEMM against a shifted view of the zero-padded input. Rows
// of the padded grid are w + 2 wide, so a tap offset is a plain column offset
// and the two wrap-around columns per row are dropped afterwards.
FeatureMap UNet::conv3x3_relu(const Conv& conv, const FeatureMap& x, int h, int w) {
  const int wp = w + 2;
  const Eigen::Index span = static_cast<Eigen::Index>(h) * wp;
  FeatureMap padded = FeatureMap::Zero(x.rows(), (h + 2) * wp + 2);
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    for (int y = 0; y < h; ++y) {
      padded.row(c).segment((y + 1) * wp + 1, w) = x.row(c).segment(static_cast<Eigen::Index>(y) * w, w);
    }
  }
  FeatureMap acc = FeatureMap::Zero(conv.out, span);
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      acc.noalias() += conv.taps[ky * 3 + kx] * padded.middleCols(ky * wp + kx, span);
    }
  }
  FeatureMap y(conv.out, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < conv.out; ++c) {
    for (int r = 0; r < h; ++r) {
      y.row(c).segment(static_cast<Eigen::Index>(r) * w, w) =
          (acc.row(c).segment(r * wp, w).array() + conv.bias(c)).cwiseMax(0.0f);
    }
  }
  return y;
}

Image UNet::forward(const FeatureMap& patch) const {
  constexpr int s = kPatchSize;
  if (patch.rows() != kInputChannels || patch.cols() != s * s) {
    throw NumericError("forward expects a 2 x 4096 patch, got " + std::to_string(patch.rows()) + " x " +
                       std::to_string(patch.cols()));
  }
  const FeatureMap e1 = conv3x3_relu(enc_[0][1], conv3x3_relu(enc_[0][0], patch, s, s), s, s);
  const FeatureMap p1 = max_pool2(e1, s, s);
  const FeatureMap e2 = conv3x3_relu(enc_[1][1], conv3x3_relu(enc_[1][0], p1, s / 2, s / 2), s / 2, s / 2);
  const FeatureMap p2 = max_pool2(e2, s / 2, s / 2);
  const FeatureMap e3 = conv3x3_relu(enc_[2][1], conv3x3_relu(enc_[2][0], p2, s / 4, s / 4), s / 4, s / 4);
  const FeatureMap u2 = upsample_concat(e3, s / 4, s / 4, e2);
  const FeatureMap d2 = conv3x3_relu(dec_[1][1], conv3x3_relu(dec_[1][0], u2, s / 2, s / 2), s / 2, s / 2);
  const FeatureMap u1 = upsample_concat(d2, s / 2, s / 2, e1);
  const FeatureMap d1 = conv3x3_relu(dec_[0][1], conv3x3_relu(dec_[0][0], u1, s, s), s, s);

  const Eigen::RowVectorXf logits = (head_.kernel * d1).row(0).array() + head_.bias(0);
  Image out(s, s);
  for (int i = 0; i < s * s; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits(i))));
    out.data()[i] = static_cast<float>(std::clamp(p, 1e-7, 1.0 - 1e-7));
  }
  return out;
}

Image forward(const WeightBundle& weights, const FeatureMap& patch) { return UNet(weights).forward(patch); }

double percentile(std::vector<float> values, double q) {
  if (values.empty()) throw NumericError("percentile of an empty set");
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + lo, values.end());
  const double a = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + lo + 1, values.end());
  return a + frac * (b - a);
}

Image normalize_channel(const Image& channel) {
  std::vector<float> values(channel.data(), channel.data() + channel.size());
  const double p1 = percentile(values, 0.01);
  const double p99 = percentile(std::move(values), 0.99);
  if (!(p99 > p1)) return Image::Zero(channel.rows(), channel.cols());
  const double scale = 1.0 / (p99 - p1);
  return ((channel.cast<double>() - p1) * scale).max(0.0).min(1.0).cast<float>();
}

NormalizedPair normalize_pair(const SummaryPair& pair) {
  return {normalize_channel(pair.spatial), normalize_channel(pair.temporal)};
}

std::vector<int> patch_starts(int extent, int patch, int stride) {
  std::vector<int> starts;
  for (int s = 0; s + patch <= extent; s += stride) starts.push_back(s);
  if (starts.empty() || starts.back() + patch < extent) starts.push_back(std::max(extent - patch, 0));
  return starts;
}

Image merge_weights(int patch) {
  Eigen::ArrayXf tent(patch);
  const double half = patch / 2.0;
  for (int i = 0; i < patch; ++i) tent[i] = static_cast<float>(1.0 - std::abs(i + 0.5 - half) / half);
  Image w = (tent.matrix() * tent.matrix().transpose()).array();
  return w.max(1e-3f);
}

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Image reflect_pad(const Image& img, int h, int w) {
  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out(y, x) = img(reflect(y, static_cast<int>(img.rows())), reflect(x, static_cast<int>(img.cols())));
    }
  }
  return out;
}

}  // namespace

ProbabilityMap tile_and_merge(const UNet& net, const NormalizedPair& input, std::size_t segment_index, int stride,
                              int threads) {
  constexpr int s = kPatchSize;
  const int h0 = static_cast<int>(input[0].rows());
  const int w0 = static_cast<int>(input[0].cols());
  if (input[1].rows() != h0 || input[1].cols() != w0) throw NumericError("summary channels differ in size");
  if (stride < 1) throw NumericError("stride must be positive");
  const int h = std::max(h0, s);
  const int w = std::max(w0, s);
  NormalizedPair padded = input;
  if (h != h0 || w != w0) {
    padded[0] = reflect_pad(input[0], h, w);
    padded[1] = reflect_pad(input[1], h, w);
  }

  std::vector<Eigen::Vector2i> origins;
  for (int y : patch_starts(h, s, stride)) {
    for (int x : patch_starts(w, s, stride)) origins.emplace_back(x, y);
  }
  std::vector<Image> outputs(origins.size());
  parallel_for(origins.size(), threads, [&](std::size_t i) {
    FeatureMap patch(kInputChannels, s * s);
    for (int c = 0; c < kInputChannels; ++c) {
      Eigen::Map<Image>(patch.row(c).data(), s, s) = padded[c].block(origins[i].y(), origins[i].x(), s, s);
    }
    outputs[i] = net.forward(patch);
  });

  const ImageD weights = merge_weights(s).cast<double>();
  ImageD num = ImageD::Zero(h, w);
  ImageD den = ImageD::Zero(h, w);
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const auto& o = origins[i];
    num.block(o.y(), o.x(), s, s) += weights * outputs[i].cast<double>();
    den.block(o.y(), o.x(), s, s) += weights;
  }
  Image merged = (num / den).cast<float>().max(0.0f).min(1.0f);
  return ProbabilityMap{segment_index, merged.topLeftCorner(h0, w0)};
}

ProbabilityMap tile_and_merge(const UNet& net, const SummaryPair& pair, int stride, int threads) {
  return tile_and_merge(net, normalize_pair(pair), pair.segment_index, stride, threads);
}

}  // namespace vseg
