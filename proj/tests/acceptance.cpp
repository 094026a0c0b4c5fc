// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

#include "oracles.hpp"

#include "vseg/evaluation.hpp"
#include "vseg/motion.hpp"
#include "vseg/nmf.hpp"
#include "vseg/pipeline.hpp"
#include "vseg/simulator.hpp"
#include "vseg/summary.hpp"
#include "vseg/trace.hpp"
#include "vseg/unet.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <unistd.h>

using namespace vseg;

namespace {

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s  %-28s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string fmt(const char* format, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Image random_image(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Image out(h, w);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = dist(rng);
  return out;
}

Video random_video(std::mt19937_64& rng, int t, int h, int w) {
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Video v(t, h, w, 400.0);
  for (float& x : v.data()) x = dist(rng);
  return v;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::filesystem::path kFixture = std::filesystem::path(VSEG_FIXTURE_DIR) / "reference_weights.vsegw1";

void oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double zncc_err = 0, table_err = 0, score_err = 0, spatial_err = 0, temporal_err = 0, iou_err = 0, trace_err = 0;

  for (int i = 0; i < 100; ++i) {
    const Image a = random_image(rng, 21, 21), b = random_image(rng, 21, 21);
    zncc_err = std::max(zncc_err, std::abs(zncc(a, b) - oracle::zncc(a.cast<double>(), b.cast<double>())));
  }

  const Image frame = random_image(rng, 64, 64);
  const auto tables = build_area_tables(frame);
  std::uniform_int_distribution<int> pick(0, 63);
  for (int i = 0; i < 100; ++i) {
    const int x = pick(rng), y = pick(rng);
    const int w = 1 + pick(rng) % (64 - x), h = 1 + pick(rng) % (64 - y);
    const double expected = oracle::rect_sum(frame, x, y, w, h);
    table_err = std::max(table_err, std::abs(tables.sum(x, y, w, h) - expected) / std::abs(expected));
  }

  const Image ref = gaussian_smooth(random_image(rng, 96, 96), 1.5);
  const Image moving = gaussian_smooth(random_image(rng, 96, 96), 1.5);
  const PatchGrid grid = PatchGrid::tile(96, 96, 21, 10);
  const ImageD scores = MotionEstimator(ref, grid, 10, false).score_candidates(moving);
  for (int dy = -10; dy <= 10; dy += 3) {
    for (int dx = -10; dx <= 10; dx += 3) {
      const double expected = oracle::mean_patch_zncc(moving, ref, grid.origins, 21, dx, dy);
      score_err = std::max(score_err, std::abs(scores(dy + 10, dx + 10) - expected) / std::max(1.0, std::abs(expected)));
    }
  }

  const Video video = random_video(rng, 50, 48, 48);
  const auto segment = split_segments(video).front();
  spatial_err = (spatial_summary(segment).cast<double>() - oracle::spatial_mean(video, 0, 50)).abs().maxCoeff();
  temporal_err =
      (temporal_summary(segment).cast<double>() - oracle::temporal_summary(video, 0, 50, 3.0)).abs().maxCoeff();

  const Eigen::VectorXd f = Eigen::VectorXd::NullaryExpr(80, [&] { return 0.1 + unit_uniform(rng); });
  const Eigen::VectorXd act = Eigen::VectorXd::NullaryExpr(20, [&] { return 0.1 + unit_uniform(rng); });
  const Eigen::MatrixXd P = f * act.transpose();
  NmfOptions opts;
  opts.tol = 1e-12;
  const auto fit = nmf(P, 1, opts);
  const double nmf_err = relative_error(P, fit.F, fit.A);

  for (int i = 0; i < 50; ++i) {
    const MaskImage p = random_image(rng, 48, 48).array() < 0.3f;
    const MaskImage q = random_image(rng, 48, 48).array() < 0.5f;
    iou_err = std::max(iou_err, std::abs(iou(p, q) - oracle::iou(p, q)));
    const auto got = extract_trace(video, q).samples;
    const auto expected = oracle::trace(video, q);
    for (std::size_t t = 0; t < got.size(); ++t) trace_err = std::max(trace_err, std::abs(got[t] - expected[t]));
  }

  const bool pass = zncc_err <= 1e-6 && table_err <= 1e-6 && score_err <= 1e-4 && spatial_err <= 1e-6 &&
                    temporal_err <= 1e-5 && nmf_err < 1e-3 && iou_err <= 1e-12 && trace_err <= 1e-6;
  std::ostringstream d;
  d.precision(2);
  d << std::scientific << "zncc " << zncc_err << ", sat " << table_err << ", table-zncc " << score_err << ", spatial "
    << spatial_err << ", temporal " << temporal_err << ", nmf " << nmf_err << ", iou " << iou_err << ", trace "
    << trace_err << std::fixed << " (" << seconds_since(t0) << " s)";
  report(pass, "oracle equivalence", d.str());
}

void motion_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  long frames = 0, exact = 0, within = 0;
  for (int i = 0; i < 20; ++i) {
    SceneConfig scene;
    scene.seed = 7000 + i;
    const Simulation sim = synthesize(scene);
    const auto result = correct_motion(sim.video);
    for (int t = 0; t < sim.video.frames(); ++t) {
      const auto& v = result.motion[t];
      const auto& truth = sim.truth.motion[t];
      ++frames;
      exact += v.dx == truth.x() && v.dy == truth.y();
      within += std::hypot(v.x() - truth.x(), v.y() - truth.y()) <= 1.0;
    }
  }
  const double exact_frac = static_cast<double>(exact) / frames;
  const double within_frac = static_cast<double>(within) / frames;
  report(exact_frac >= 0.95 && within == frames, "motion recovery",
         fmt("exact %.4f (>= 0.95), residual <= 1 px %.4f (= 1) over %.0f frames (%.1f s)", exact_frac, within_frac,
             static_cast<double>(frames), seconds_since(t0)));
}

void unet_parity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  double worst = 0.0;
  bool shape = true;
  for (int i = 0; i < 20; ++i) {
    const WeightBundle w = random_weights(300 + i);
    FeatureMap patch(2, 64 * 64);
    std::vector<ImageD> channels;
    for (int c = 0; c < 2; ++c) {
      const Image img = random_image(rng, 64, 64);
      patch.row(c) = Eigen::Map<const Eigen::RowVectorXf>(img.data(), 64 * 64);
      channels.push_back(img.cast<double>());
    }
    const Image out = forward(w, patch);
    shape = shape && out.rows() == 64 && out.cols() == 64;
    worst = std::max(worst, (out.cast<double>() - oracle::unet_forward(w, channels)).abs().maxCoeff());
  }
  report(worst <= 1e-4 && shape, "u-net forward parity",
         fmt("max |diff| %.2e (<= 1e-4) on 20 patches, ", worst) + (shape ? "output 64x64" : "wrong output shape") +
             fmt(" (%.1f s)", seconds_since(t0)));
}

void end_to_end_f1() {
  const auto t0 = std::chrono::steady_clock::now();
  if (!std::filesystem::exists(kFixture)) {
    report(false, "end-to-end F1", "reference weight fixture missing");
    return;
  }
  const WeightBundle weights = load_weights(kFixture);
  double total = 0.0;
  std::ostringstream per;
  per.precision(2);
  per << std::fixed;
  for (int i = 0; i < 10; ++i) {
    SceneConfig scene;
    scene.seed = 9000 + i;
    const Simulation sim = synthesize(scene);
    const PipelineResult r = process(sim.video, &weights, PipelineConfig{});
    const MatchReport m = match_and_score(r.footprints.masks(), sim.truth.active_footprints());
    total += m.f1;
    per << (i ? " " : "") << m.f1;
  }
  const double mean = total / 10.0;
  report(mean >= 0.75, "end-to-end F1",
         fmt("mean F1 %.3f (>= 0.75) on 10 held-out videos (%.0f s); per video: ", mean, seconds_since(t0)) + per.str());
}

void realtime() {
  PipelineConfig c;
  c.streaming = true;
  c.threads = static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 8u));
  c.output_dir = std::filesystem::temp_directory_path() / ("vseg_accept_bench_" + std::to_string(::getpid()));
  if (std::filesystem::exists(kFixture)) c.weights = kFixture;
  const ThroughputReport r = benchmark_pipeline(c, 2500, 128, 400.0, 1);
  std::filesystem::remove_all(c.output_dir);
  const double ratio = r.realtime_ratio.value_or(0.0);
  std::ostringstream d;
  d.precision(3);
  d << std::fixed << "realtime_ratio " << ratio << " (>= 1.0), " << r.effective_fps << " fps, total "
    << r.total_seconds << " s, threads " << c.threads << ", stages:";
  for (const auto& s : r.stages) d << " " << s.name << "=" << s.seconds;
  report(ratio >= 1.0, "real-time (streaming)", d.str());
}

void determinism() {
  const auto dir = std::filesystem::temp_directory_path() / ("vseg_accept_det_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  SceneConfig scene;
  scene.seed = 9100;
  save_video(synthesize(scene).video, dir / "in.vsegv1");
  PipelineConfig c;
  c.input = dir / "in.vsegv1";
  c.threads = 1;
  if (std::filesystem::exists(kFixture)) {
    c.weights = kFixture;
  } else {
    save_weights(random_weights(5), dir / "w.vsegw1");
    c.weights = dir / "w.vsegw1";
  }
  c.output_dir = dir / "a";
  const auto a = run(c);
  c.output_dir = dir / "b";
  run(c);
  const bool masks = slurp(dir / "a" / "footprints.tif") == slurp(dir / "b" / "footprints.tif");
  const bool traces = slurp(dir / "a" / "traces.csv") == slurp(dir / "b" / "traces.csv");
  std::filesystem::remove_all(dir);
  report(masks && traces, "determinism",
         std::string("footprints.tif ") + (masks ? "identical" : "DIFFERENT") + ", traces.csv " +
             (traces ? "identical" : "DIFFERENT") + " (" + std::to_string(a.footprints.footprints.size()) +
             " footprints)");
}

void throughput_arithmetic() {
  const ThroughputReport r =
      make_throughput_report(10000, {{"motion", 5.5}, {"segmentation", 6.9}, {"trace", 0.1}}, 12.5, 741.0);
  const double ratio = r.realtime_ratio.value_or(0.0);
  report(std::abs(r.effective_fps - 800.0) < 1e-9 && std::abs(ratio - 1.08) <= 0.01, "evaluation arithmetic",
         fmt("10000 frames / 12.5 s = %.1f fps, ratio vs 741 fps = %.4f (1.08 +/- 0.01)", r.effective_fps, ratio));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, void (*)()>> criteria{
      {"oracle equivalence", oracle_equivalence}, {"motion recovery", motion_recovery},
      {"u-net forward parity", unet_parity},     {"end-to-end F1", end_to_end_f1},
      {"real-time (streaming)", realtime},       {"determinism", determinism},
      {"evaluation arithmetic", throughput_arithmetic}};
  for (const auto& [name, check] : criteria) {
    try {
      check();
    } catch (const std::exception& e) {
      report(false, name, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
