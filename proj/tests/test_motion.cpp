#include "oracles.hpp"
#include "testing.hpp"

#include "vseg/motion.hpp"
#include "vseg/simulator.hpp"
#include "vseg/summary.hpp"

#include <doctest.h>

#include <fstream>

using namespace vseg;
using vseg::testing::random_image;

namespace {

ImageD to_double(const Image& a) { return a.cast<double>(); }

// Smooth random texture, large enough to crop shifted views without wrap.
Image texture(std::mt19937_64& rng, int h, int w) {
  return gaussian_smooth(random_image(rng, h, w, 0.0f, 100.0f), 1.5);
}

// Crop of `canvas` such that out(x, y) = base(x - dx, y - dy), base being the crop at (m, m).
Image shifted_view(const Image& canvas, int m, int size, int dx, int dy) {
  return canvas.block(m - dy, m - dx, size, size);
}

}  // namespace

TEST_SUITE("motion") {
  TEST_CASE("zncc special cases") {
    std::mt19937_64 rng(1);
    const Image a = random_image(rng, 21, 21);
    CHECK(zncc(a, a) == doctest::Approx(1.0).epsilon(1e-6));
    const Image neg = -2.0f * a + 5.0f;
    CHECK(zncc(a, neg) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(zncc(a, Image::Constant(21, 21, 3.0f)) == 0.0);
    CHECK(zncc(Image::Constant(21, 21, 3.0f), Image::Constant(21, 21, 3.0f)) == 0.0);
    CHECK_THROWS_AS(zncc(a, Image::Zero(21, 20)), NumericError);
  }

  TEST_CASE("zncc matches the direct formula and is affine invariant") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      const Image a = random_image(rng, 21, 21);
      const Image b = random_image(rng, 21, 21);
      const double expected = oracle::zncc(to_double(a), to_double(b));
      CHECK(std::abs(zncc(a, b) - expected) <= 1e-6);
      const ImageD scaled = 3.5 * to_double(b) + 17.0;
      CHECK(std::abs(zncc(to_double(a), scaled) - expected) <= 1e-6);
    }
  }

  TEST_CASE("area tables") {
    const AreaTables<double> ones(Image::Ones(8, 8));
    for (int k = 1; k <= 8; ++k) {
      for (int y = 0; y + k <= 8; ++y) {
        for (int x = 0; x + k <= 8; ++x) CHECK(ones.sum(x, y, k, k) == k * k);
      }
    }
    const auto single = build_area_tables(Image::Constant(1, 1, 4.5f));
    CHECK(single.sum(0, 0, 1, 1) == 4.5);
    CHECK(single.sum_squares(0, 0, 1, 1) == doctest::Approx(20.25));

    std::mt19937_64 rng(3);
    const Image frame = random_image(rng, 64, 64);
    const auto tables = build_area_tables(frame);
    std::uniform_int_distribution<int> pick(0, 63);
    for (int i = 0; i < 100; ++i) {
      const int x = pick(rng), y = pick(rng);
      const int w = 1 + pick(rng) % (64 - x), h = 1 + pick(rng) % (64 - y);
      const double expected = oracle::rect_sum(frame, x, y, w, h);
      CHECK(std::abs(tables.sum(x, y, w, h) - expected) <= 1e-6 * std::abs(expected));
    }
  }

  TEST_CASE("patch grid tiles the inset frame") {
    const PatchGrid grid = PatchGrid::tile(128, 128, 21, 10);
    CHECK(grid.patch_size == 21);
    CHECK(grid.stride == 21);
    MaskImage covered = MaskImage::Constant(128, 128, false);
    for (const auto& o : grid.origins) {
      CHECK(o.x() >= 10);
      CHECK(o.y() >= 10);
      CHECK(o.x() + 21 <= 118);
      CHECK(o.y() + 21 <= 118);
      covered.block(o.y(), o.x(), 21, 21) = true;
    }
    CHECK(covered.block(10, 10, 108, 108).all());
  }

  TEST_CASE("table-based scores equal the window-by-window oracle") {
    std::mt19937_64 rng(4);
    const Image reference = texture(rng, 64, 64);
    const Image frame = texture(rng, 64, 64);
    const int r = 4;
    const PatchGrid grid = PatchGrid::tile(64, 64, 21, r);
    const MotionEstimator estimator(reference, grid, r, false);
    const ImageD scores = estimator.score_candidates(frame);
    REQUIRE(scores.rows() == 2 * r + 1);
    REQUIRE(scores.cols() == 2 * r + 1);
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const double expected = oracle::mean_patch_zncc(frame, reference, grid.origins, 21, dx, dy);
        CHECK(std::abs(scores(dy + r, dx + r) - expected) <= 1e-4 * std::max(1.0, std::abs(expected)));
      }
    }
  }

  TEST_CASE("identity and constructed shifts") {
    std::mt19937_64 rng(5);
    const int size = 96, m = 10;
    const Image canvas = texture(rng, size + 2 * m, size + 2 * m);
    const Image reference = shifted_view(canvas, m, size, 0, 0);
    const PatchGrid grid = PatchGrid::tile(size, size, 21, m);

    const MotionVector same = estimate_motion(reference, reference, grid, m);
    CHECK(same.dx == 0);
    CHECK(same.dy == 0);
    CHECK(same.confidence == doctest::Approx(1.0).epsilon(1e-5));

    for (const auto& [dx, dy] : std::vector<std::pair<int, int>>{{3, -2}, {-5, 5}, {10, 0}, {0, -10}}) {
      const MotionVector v = estimate_motion(shifted_view(canvas, m, size, dx, dy), reference, grid, m);
      CHECK(v.dx == dx);
      CHECK(v.dy == dy);
      CHECK(std::abs(v.sub_x) < 0.5);
      CHECK(std::abs(v.sub_y) < 0.5);
    }
  }

  TEST_CASE("noisy shift Monte Carlo") {
    std::mt19937_64 rng(6);
    const int size = 96, m = 10;
    int exact = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const Image canvas = texture(rng, size + 2 * m, size + 2 * m);
      const Image reference = shifted_view(canvas, m, size, 0, 0);
      const float range = canvas.maxCoeff() - canvas.minCoeff();
      std::normal_distribution<float> noise(0.0f, 0.1f * range);
      Image frame = shifted_view(canvas, m, size, 3, -2);
      for (Eigen::Index i = 0; i < frame.size(); ++i) frame.data()[i] += noise(rng);
      const MotionVector v = estimate_motion(frame, reference, PatchGrid::tile(size, size, 21, m), m);
      exact += v.dx == 3 && v.dy == -2;
    }
    CHECK(exact >= 95);
  }

  TEST_CASE("ties prefer the smallest displacement") {
    // A constant frame scores 0 everywhere.
    const Image flat = Image::Constant(64, 64, 5.0f);
    const MotionVector v = estimate_motion(flat, flat, PatchGrid::tile(64, 64, 21, 3), 3);
    CHECK(v.dx == 0);
    CHECK(v.dy == 0);
    CHECK(v.confidence == 0.0);
  }

  TEST_CASE("frame too small for the search") {
    const Image small = Image::Ones(30, 30);
    CHECK_THROWS_AS(MotionEstimator(small, MotionConfig{}), NumericError);
    std::mt19937_64 rng(7);
    const Image ref = random_image(rng, 64, 64);
    const MotionEstimator estimator(ref, MotionConfig{});
    CHECK_THROWS_AS(estimator.estimate(random_image(rng, 64, 65)), NumericError);
  }

  TEST_CASE("correct_motion on a motion-free video is bit-exact") {
    std::mt19937_64 rng(8);
    const Image still = texture(rng, 64, 64);
    Video video(5, 64, 64, 400.0);
    for (int t = 0; t < 5; ++t) video.frame(t) = still;
    MotionConfig config;
    config.subpixel = false;
    const auto result = correct_motion(video, config);
    CHECK(result.corrected == video);
    REQUIRE(result.motion.size() == 5);
    for (const auto& v : result.motion) {
      CHECK(v.dx == 0);
      CHECK(v.dy == 0);
    }
  }

  TEST_CASE("single-frame video") {
    std::mt19937_64 rng(9);
    Video video(1, 64, 64);
    video.frame(0) = texture(rng, 64, 64);
    const auto result = correct_motion(video);
    REQUIRE(result.motion.size() == 1);
    CHECK(result.motion[0].dx == 0);
    CHECK(result.motion[0].dy == 0);
    MotionConfig exact;
    exact.subpixel = false;
    CHECK(correct_motion(video, exact).corrected == video);
  }

  TEST_CASE("translate_frame") {
    std::mt19937_64 rng(10);
    const Image frame = random_image(rng, 20, 24);
    const Image moved = translate_frame(frame, 2, -3);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 24; ++x) {
        CHECK(moved(y, x) == frame(std::clamp(y - 3, 0, 19), std::clamp(x + 2, 0, 23)));
      }
    }
    const Image half = translate_frame(frame, 0.5, 0.0);
    CHECK(half(4, 4) == doctest::Approx(0.5 * (frame(4, 4) + frame(4, 5))));
  }

  TEST_CASE("simulated video: residual and composition") {
    SceneConfig scene;
    scene.frames = 200;
    scene.noise = 0.0;
    scene.seed = 11;
    const Simulation sim = synthesize(scene);
    MotionConfig config;
    config.subpixel = false;
    const auto result = correct_motion(sim.video, config);
    REQUIRE(result.motion.size() == 200);
    for (int t = 0; t < 200; ++t) {
      const auto& truth = sim.truth.motion[t];
      CHECK(std::abs(result.motion[t].dx - truth.x()) <= 1);
      CHECK(std::abs(result.motion[t].dy - truth.y()) <= 1);
    }
    const MotionEstimator again(mean_reference(sim.video, 50), config);
    for (int t = 0; t < 200; t += 7) {
      const MotionVector v = again.estimate(result.corrected.frame(t));
      CHECK(v.dx == 0);
      CHECK(v.dy == 0);
    }
  }

  TEST_CASE("motion csv") {
    vseg::testing::TempDir dir("motion");
    std::vector<MotionVector> motion(2);
    motion[1].dx = -3;
    motion[1].sub_x = 0.25;
    motion[1].dy = 2;
    motion[1].confidence = 0.9;
    write_motion_csv(motion, dir / "m.csv");
    std::ifstream in(dir / "m.csv");
    std::string header, first, second;
    std::getline(in, header);
    std::getline(in, first);
    std::getline(in, second);
    CHECK(header == "frame,dx,dy,confidence");
    CHECK(second.rfind("1,-2.75,2,0.9", 0) == 0);
  }
}
