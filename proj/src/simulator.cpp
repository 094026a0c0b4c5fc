#include "vseg/simulator.hpp"

#include "vseg/nmf.hpp"
#include "vseg/summary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace vseg {

namespace {

constexpr double kBackground = 100.0;
constexpr int kSpikeKernel = 4;  // frames
constexpr double kSpikeDecay = 1.0;  // frames

// Portable draws so a seed reproduces the same scene on every toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return unit_uniform(gen_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(std::floor(uniform() * (hi - lo + 1))); }
  bool bernoulli(double p) { return uniform() < p; }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

void validate(const SceneConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError("scene config: " + what); };
  if (c.width < 64 || c.height < 64) fail("frame dimensions must be at least 64");
  if (c.frames < 1) fail("frames must be positive");
  if (!(c.frame_rate > 0)) fail("frame_rate must be positive");
  if (c.min_neurons < 0 || c.max_neurons < c.min_neurons) fail("neuron count range is empty");
  if (!(c.min_radius > 0) || c.max_radius < c.min_radius) fail("radius range is empty");
  if (c.spike_rate < 0 || c.spike_amplitude < 0 || c.noise < 0 || c.illumination < 0) fail("negative rate or level");
  if (c.vessels < 0 || c.motion_amplitude < 0) fail("negative vessel count or motion amplitude");
  if (!(c.motion_rate >= 0.0)) fail("motion_rate must be non-negative");
  if (c.segment_length < 2) fail("segment_length must be at least 2");
}

Image smooth_noise(Rng& rng, int h, int w, double sigma) {
  Image noise(h, w);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = static_cast<float>(rng.normal());
  Image s = gaussian_smooth<float>(noise, sigma);
  const float mean = s.mean();
  const float sd = std::sqrt((s - mean).square().mean());
  return sd > 0 ? Image((s - mean) / sd) : Image(s);
}

struct Placed {
  double cx, cy, rx, ry, angle, radius;
  bool annular;
  bool paired = false;
};

// Soft ellipse profile on a window of the canvas.
struct NeuronLayer {
  int x0 = 0, y0 = 0;  // canvas origin of `weight`
  Image weight;
};

NeuronLayer render_neuron(const Placed& n, int canvas_h, int canvas_w, int margin, MaskImage& footprint) {
  const int reach = static_cast<int>(std::ceil(std::max(n.rx, n.ry) + 3));
  const double ccx = n.cx + margin, ccy = n.cy + margin;
  NeuronLayer layer;
  layer.x0 = std::max(0, static_cast<int>(std::floor(ccx)) - reach);
  layer.y0 = std::max(0, static_cast<int>(std::floor(ccy)) - reach);
  const int x1 = std::min(canvas_w - 1, static_cast<int>(std::ceil(ccx)) + reach);
  const int y1 = std::min(canvas_h - 1, static_cast<int>(std::ceil(ccy)) + reach);
  layer.weight = Image::Zero(y1 - layer.y0 + 1, x1 - layer.x0 + 1);
  const double c = std::cos(n.angle), s = std::sin(n.angle);
  for (int y = layer.y0; y <= y1; ++y) {
    for (int x = layer.x0; x <= x1; ++x) {
      const double dx = x - ccx, dy = y - ccy;
      const double u = (c * dx + s * dy) / n.rx;
      const double v = (-s * dx + c * dy) / n.ry;
      const double rho = std::sqrt(u * u + v * v);
      double w = 1.0 / (1.0 + std::exp((rho - 1.0) * n.radius / 0.6));
      if (n.annular && rho < 0.85) w *= 0.35 + 0.65 * std::exp(-(rho - 0.85) * (rho - 0.85) / (2 * 0.12 * 0.12));
      layer.weight(y - layer.y0, x - layer.x0) = static_cast<float>(w);
      const int fy = y - margin, fx = x - margin;
      if (rho <= 1.0 && fy >= 0 && fx >= 0 && fy < footprint.rows() && fx < footprint.cols()) footprint(fy, fx) = true;
    }
  }
  return layer;
}

std::vector<Placed> place_neurons(Rng& rng, const SceneConfig& cfg) {
  const int count = rng.integer(cfg.min_neurons, cfg.max_neurons);
  std::vector<Placed> placed;
  for (int i = 0; i < count; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < 500 && !ok; ++attempt) {
      Placed n;
      n.radius = rng.uniform(cfg.min_radius, cfg.max_radius);
      const double aspect = rng.uniform(1.0, 1.4);
      n.rx = n.radius * std::sqrt(aspect);
      n.ry = n.radius / std::sqrt(aspect);
      n.angle = rng.uniform(0.0, std::numbers::pi);
      n.annular = rng.bernoulli(cfg.annular_probability);
      const double edge = std::max(n.rx, n.ry) + 2.0;
      int partner = -1;
      if (!placed.empty() && rng.bernoulli(cfg.overlap_probability)) {
        partner = rng.integer(0, static_cast<int>(placed.size()) - 1);
        if (placed[partner].paired) partner = -1;
      }
      if (partner >= 0) {
        const auto& p = placed[partner];
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double dist = rng.uniform(0.7, 0.9) * (n.radius + p.radius);
        n.cx = p.cx + dist * std::cos(phi);
        n.cy = p.cy + dist * std::sin(phi);
      } else {
        n.cx = rng.uniform(edge, cfg.width - 1 - edge);
        n.cy = rng.uniform(edge, cfg.height - 1 - edge);
      }
      if (n.cx < edge || n.cy < edge || n.cx > cfg.width - 1 - edge || n.cy > cfg.height - 1 - edge) continue;
      ok = true;
      for (int j = 0; j < static_cast<int>(placed.size()) && ok; ++j) {
        if (j == partner) continue;
        const double d = std::hypot(n.cx - placed[j].cx, n.cy - placed[j].cy);
        ok = d >= n.radius + placed[j].radius + 3.0;
      }
      if (ok) {
        if (partner >= 0) {
          placed[partner].paired = true;
          n.paired = true;
        }
        placed.push_back(n);
      }
    }
    if (!ok) {
      throw NumericError("infeasible neuron placement: could not place neuron " + std::to_string(i + 1) + " of " +
                         std::to_string(count));
    }
  }
  return placed;
}

std::vector<Eigen::Vector2i> motion_track(Rng& rng, const SceneConfig& cfg) {
  std::vector<Eigen::Vector2i> track(cfg.frames, Eigen::Vector2i::Zero());
  const int amp = cfg.motion_amplitude;
  if (amp == 0) return track;
  const double step_probability = std::min(1.0, cfg.motion_rate / cfg.frame_rate);
  Eigen::Vector2i d = Eigen::Vector2i::Zero();
  for (int t = 1; t < cfg.frames; ++t) {
    for (int axis = 0; axis < 2; ++axis) {
      if (!rng.bernoulli(step_probability)) continue;
      const int cur = d[axis];
      int step;
      if (cur == 0) {
        step = rng.bernoulli(0.5) ? 1 : -1;
      } else {
        const bool toward = rng.bernoulli(0.5 + 0.3 * std::abs(cur) / amp);
        step = (cur > 0) == toward ? -1 : 1;
      }
      d[axis] = std::clamp(cur + step, -amp, amp);
    }
    track[t] = d;
  }
  // Centre the track on the frames a mean reference would average.
  const int n = std::min(cfg.frames, cfg.segment_length);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (int t = 0; t < n; ++t) mean += track[t].cast<double>();
  const Eigen::Vector2i shift(static_cast<int>(std::lround(mean.x() / n)), static_cast<int>(std::lround(mean.y() / n)));
  for (auto& v : track) {
    v = v - shift;
    v.x() = std::clamp(v.x(), -amp, amp);
    v.y() = std::clamp(v.y(), -amp, amp);
  }
  return track;
}

}  // namespace

std::vector<MaskImage> GroundTruth::footprints() const {
  std::vector<MaskImage> out;
  for (const auto& n : neurons) out.push_back(n.footprint);
  return out;
}

std::vector<MaskImage> GroundTruth::active_footprints() const {
  std::vector<MaskImage> out;
  for (const auto& n : neurons) {
    if (!n.spike_frames.empty()) out.push_back(n.footprint);
  }
  return out;
}

Simulation synthesize(const SceneConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const int m = cfg.motion_amplitude;
  const int ch = cfg.height + 2 * m;
  const int cw = cfg.width + 2 * m;

  // Static layers on the padded canvas.
  const Image fine = smooth_noise(rng, ch, cw, 2.0);
  const Image coarse = smooth_noise(rng, ch, cw, 6.0);
  Image background = (kBackground * (1.0f + 0.12f * fine + 0.15f * coarse)).max(0.2f * kBackground);

  Image illumination(ch, cw);
  double coef[5];
  for (double& c : coef) c = rng.uniform(-0.5, 0.5);
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      const double u = 2.0 * x / (cw - 1) - 1.0, v = 2.0 * y / (ch - 1) - 1.0;
      const double field = 1.0 + cfg.illumination * (coef[0] * u + coef[1] * v + coef[2] * u * u + coef[3] * v * v +
                                                      coef[4] * u * v);
      illumination(y, x) = static_cast<float>(std::clamp(field, 0.3, 2.0));
    }
  }

  Image vessel = Image::Ones(ch, cw);
  for (int k = 0; k < cfg.vessels; ++k) {
    const double width = rng.uniform(1.2, 2.5);
    const double depth = rng.uniform(0.25, 0.45);
    double px = rng.uniform(0, cw - 1), py = rng.uniform(0, ch - 1);
    double heading = rng.uniform(0, 2 * std::numbers::pi);
    Image darkening = Image::Zero(ch, cw);
    const int reach = static_cast<int>(std::ceil(4 * width));
    // Walk both ways from the seed point so the curve crosses the field.
    for (int dir = 0; dir < 2; ++dir) {
      double x = px, y = py, a = heading + dir * std::numbers::pi;
      for (int step = 0; step < ch + cw; ++step) {
        for (int yy = std::max(0, static_cast<int>(y) - reach); yy <= std::min(ch - 1, static_cast<int>(y) + reach); ++yy) {
          for (int xx = std::max(0, static_cast<int>(x) - reach); xx <= std::min(cw - 1, static_cast<int>(x) + reach);
               ++xx) {
            const double d2 = (xx - x) * (xx - x) + (yy - y) * (yy - y);
            darkening(yy, xx) = std::max(darkening(yy, xx), static_cast<float>(depth * std::exp(-d2 / (2 * width * width))));
          }
        }
        a += 0.06 * rng.normal();
        x += std::cos(a);
        y += std::sin(a);
        if (x < -reach || y < -reach || x > cw + reach || y > ch + reach) break;
      }
    }
    vessel *= 1.0f - darkening;
  }
  const Image gain = illumination * vessel;
  const Image static_part = gain * background;

  Simulation sim;
  GroundTruth& truth = sim.truth;
  const auto placed = place_neurons(rng, cfg);
  std::vector<NeuronLayer> layers;
  const double lambda = cfg.spike_rate / cfg.frame_rate;
  for (const auto& n : placed) {
    NeuronTruth nt;
    nt.footprint = MaskImage::Constant(cfg.height, cfg.width, false);
    nt.center_x = n.cx;
    nt.center_y = n.cy;
    NeuronLayer layer = render_neuron(n, ch, cw, m, nt.footprint);
    layer.weight *= gain.block(layer.y0, layer.x0, layer.weight.rows(), layer.weight.cols());
    layers.push_back(std::move(layer));

    const double brightness = rng.uniform(0.3, 0.6) * kBackground;
    int last = -kSpikeKernel;
    for (int t = 0; t < cfg.frames; ++t) {
      if (t - last >= kSpikeKernel && rng.bernoulli(lambda)) {
        nt.spike_frames.push_back(t);
        last = t;
      }
    }
    nt.fluorescence.assign(cfg.frames, brightness);
    for (int s : nt.spike_frames) {
      for (int k = 0; k < kSpikeKernel && s + k < cfg.frames; ++k) {
        nt.fluorescence[s + k] += brightness * cfg.spike_amplitude * std::exp(-k / kSpikeDecay);
      }
    }
    truth.neurons.push_back(std::move(nt));
  }
  truth.motion = motion_track(rng, cfg);

  sim.video = Video(cfg.frames, cfg.height, cfg.width, cfg.frame_rate);
  Image canvas(ch, cw);
  const double floor_var = cfg.noise * kBackground * cfg.noise * kBackground;
  for (int t = 0; t < cfg.frames; ++t) {
    canvas = static_part;
    for (std::size_t j = 0; j < layers.size(); ++j) {
      const auto& l = layers[j];
      canvas.block(l.y0, l.x0, l.weight.rows(), l.weight.cols()) +=
          l.weight * static_cast<float>(truth.neurons[j].fluorescence[t]);
    }
    const int ox = m - truth.motion[t].x();
    const int oy = m - truth.motion[t].y();
    auto frame = sim.video.frame(t);
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        double v = canvas(y + oy, x + ox);
        if (floor_var > 0) v += std::sqrt(floor_var * (0.5 + 0.5 * std::max(v, 0.0) / kBackground)) * rng.normal();
        frame(y, x) = static_cast<float>(std::max(v, 0.0));
      }
    }
  }

  for (int first = 0; first < cfg.frames; first += cfg.segment_length) {
    const int end = std::min(first + cfg.segment_length, cfg.frames);
    MaskImage mask = MaskImage::Constant(cfg.height, cfg.width, false);
    for (const auto& n : truth.neurons) {
      const bool spiking = std::any_of(n.spike_frames.begin(), n.spike_frames.end(),
                                       [&](int s) { return s >= first && s < end; });
      if (spiking) mask = mask || n.footprint;
    }
    truth.segment_masks.push_back(std::move(mask));
  }
  return sim;
}

nlohmann::json SceneConfig::to_json() const {
  return {{"width", width},
          {"height", height},
          {"frames", frames},
          {"frame_rate", frame_rate},
          {"min_neurons", min_neurons},
          {"max_neurons", max_neurons},
          {"min_radius", min_radius},
          {"max_radius", max_radius},
          {"overlap_probability", overlap_probability},
          {"annular_probability", annular_probability},
          {"spike_rate", spike_rate},
          {"spike_amplitude", spike_amplitude},
          {"vessels", vessels},
          {"illumination", illumination},
          {"noise", noise},
          {"motion_amplitude", motion_amplitude},
          {"motion_rate", motion_rate},
          {"segment_length", segment_length},
          {"seed", seed}};
}

SceneConfig SceneConfig::from_json(const nlohmann::json& j) {
  SceneConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown scene config key '" + key + "'");
  }
  try {
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.frames = j.value("frames", c.frames);
    c.frame_rate = j.value("frame_rate", c.frame_rate);
    c.min_neurons = j.value("min_neurons", c.min_neurons);
    c.max_neurons = j.value("max_neurons", c.max_neurons);
    c.min_radius = j.value("min_radius", c.min_radius);
    c.max_radius = j.value("max_radius", c.max_radius);
    c.overlap_probability = j.value("overlap_probability", c.overlap_probability);
    c.annular_probability = j.value("annular_probability", c.annular_probability);
    c.spike_rate = j.value("spike_rate", c.spike_rate);
    c.spike_amplitude = j.value("spike_amplitude", c.spike_amplitude);
    c.vessels = j.value("vessels", c.vessels);
    c.illumination = j.value("illumination", c.illumination);
    c.noise = j.value("noise", c.noise);
    c.motion_amplitude = j.value("motion_amplitude", c.motion_amplitude);
    c.motion_rate = j.value("motion_rate", c.motion_rate);
    c.segment_length = j.value("segment_length", c.segment_length);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scene config: ") + e.what());
  }
  return c;
}

void save_simulation(const Simulation& sim, const SceneConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_video(sim.video, dir / "video.vsegv1");
  save_masks(sim.truth.footprints(), dir / "footprints.tif");
  save_masks(sim.truth.segment_masks, dir / "segmask.tif");
  nlohmann::json gt;
  gt["config"] = config.to_json();
  gt["frames"] = sim.video.frames();
  gt["height"] = sim.video.height();
  gt["width"] = sim.video.width();
  gt["frame_rate"] = sim.video.frame_rate();
  gt["masks"] = "footprints.tif";
  gt["segment_masks"] = "segmask.tif";
  gt["neurons"] = nlohmann::json::array();
  for (std::size_t i = 0; i < sim.truth.neurons.size(); ++i) {
    const auto& n = sim.truth.neurons[i];
    gt["neurons"].push_back({{"id", i}, {"center", {n.center_x, n.center_y}}, {"spike_frames", n.spike_frames}});
  }
  gt["motion"] = nlohmann::json::array();
  for (const auto& v : sim.truth.motion) gt["motion"].push_back({v.x(), v.y()});
  std::ofstream out(dir / "gt.json");
  if (!out) throw IoError("cannot write " + (dir / "gt.json").string());
  out << gt.dump(1) << '\n';
}

}  // namespace vseg
