#include "testing.hpp"

#include "vseg/video_io.hpp"

#include <doctest.h>
#include <tiffio.h>

#include <fstream>

using namespace vseg;
using vseg::testing::TempDir;

namespace {

// Writes integer pages directly with libtiff; page sizes may differ.
template <typename T>
void write_int_tiff(const std::filesystem::path& path, const std::vector<ImageT<T>>& pages, const char* description) {
  TIFF* tif = TIFFOpen(path.string().c_str(), "w");
  REQUIRE(tif != nullptr);
  for (const auto& page : pages) {
    TIFFSetField(tif, TIFFTAG_IMAGEWIDTH, static_cast<uint32_t>(page.cols()));
    TIFFSetField(tif, TIFFTAG_IMAGELENGTH, static_cast<uint32_t>(page.rows()));
    TIFFSetField(tif, TIFFTAG_BITSPERSAMPLE, static_cast<uint16_t>(8 * sizeof(T)));
    TIFFSetField(tif, TIFFTAG_SAMPLESPERPIXEL, static_cast<uint16_t>(1));
    TIFFSetField(tif, TIFFTAG_SAMPLEFORMAT, static_cast<uint16_t>(SAMPLEFORMAT_UINT));
    TIFFSetField(tif, TIFFTAG_PHOTOMETRIC, static_cast<uint16_t>(PHOTOMETRIC_MINISBLACK));
    TIFFSetField(tif, TIFFTAG_PLANARCONFIG, static_cast<uint16_t>(PLANARCONFIG_CONTIG));
    TIFFSetField(tif, TIFFTAG_ROWSPERSTRIP, static_cast<uint32_t>(page.rows()));
    if (description) TIFFSetField(tif, TIFFTAG_IMAGEDESCRIPTION, description);
    for (Eigen::Index y = 0; y < page.rows(); ++y) {
      ImageT<T> row = page.row(y);
      REQUIRE(TIFFWriteScanline(tif, row.data(), static_cast<uint32_t>(y), 0) == 1);
    }
    TIFFWriteDirectory(tif);
  }
  TIFFClose(tif);
}

Video random_video(int t, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1000.0f);
  Video v(t, h, w, 400.0);
  for (float& x : v.data()) x = dist(rng);
  return v;
}

}  // namespace

TEST_SUITE("video_io") {
  TEST_CASE("constant 8-bit stack loads unscaled") {
    TempDir dir("vio");
    write_int_tiff<std::uint8_t>(dir / "c.tif", std::vector<ImageT<std::uint8_t>>(3, ImageT<std::uint8_t>::Constant(4, 4, 7)),
                                 nullptr);
    const Video v = load_video(dir / "c.tif");
    CHECK(v.frames() == 3);
    CHECK(v.height() == 4);
    CHECK(v.width() == 4);
    for (float x : v.data()) CHECK(x == 7.0f);
  }

  TEST_CASE("16-bit stack keeps its range and frame rate") {
    TempDir dir("vio");
    std::vector<ImageT<std::uint16_t>> pages(2, ImageT<std::uint16_t>::Zero(5, 6));
    pages[1](2, 3) = 65535;
    write_int_tiff(dir / "s.tif", pages, "acquired frame_rate=123.5");
    const Video v = load_video(dir / "s.tif");
    CHECK(v(1, 2, 3) == 65535.0f);
    CHECK(*std::max_element(v.data().begin(), v.data().end()) == 65535.0f);
    CHECK(v.frame_rate() == doctest::Approx(123.5));
  }

  TEST_CASE("mixed page sizes name the page") {
    TempDir dir("vio");
    std::vector<ImageT<std::uint8_t>> pages{ImageT<std::uint8_t>::Zero(4, 4), ImageT<std::uint8_t>::Zero(4, 4),
                                            ImageT<std::uint8_t>::Zero(5, 4)};
    write_int_tiff(dir / "m.tif", pages, nullptr);
    try {
      load_video(dir / "m.tif");
      FAIL("expected an error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("page 2") != std::string::npos);
    }
  }

  TEST_CASE("float TIFF and raw round trips are bit-identical") {
    TempDir dir("vio");
    const Video v = random_video(10, 16, 16, 3);
    save_video(v, dir / "v.tif");
    save_video(v, dir / "v.vsegv1");
    const Video a = load_video(dir / "v.tif");
    const Video b = load_video(dir / "v.vsegv1");
    CHECK(a == v);
    CHECK(b == v);
    CHECK(a.frame_rate() == doctest::Approx(400.0));
    CHECK(b.frame_rate() == 400.0);
  }

  TEST_CASE("single frame round trip") {
    TempDir dir("vio");
    const Video v = random_video(1, 7, 9, 4);
    save_video(v, dir / "one.tif");
    CHECK(load_video(dir / "one.tif") == v);
  }

  TEST_CASE("long stack round trip") {
    TempDir dir("vio");
    const Video v = random_video(10000, 128, 128, 5);
    save_video(v, dir / "long.vsegv1");
    CHECK(load_video(dir / "long.vsegv1") == v);
    save_video(v, dir / "long.tif");
    CHECK(load_video(dir / "long.tif") == v);
  }

  TEST_CASE("errors") {
    TempDir dir("vio");
    const Video v = random_video(2, 4, 4, 6);
    CHECK_THROWS_AS(save_video(v, ""), IoError);
    CHECK_THROWS_AS(load_video(dir / "missing.tif"), IoError);
    save_video(v, dir / "t.vsegv1");
    std::filesystem::resize_file(dir / "t.vsegv1", std::filesystem::file_size(dir / "t.vsegv1") - 3);
    CHECK_THROWS_AS(load_video(dir / "t.vsegv1"), IoError);
    std::ofstream(dir / "junk.tif") << "not an image";
    CHECK_THROWS_AS(load_video(dir / "junk.tif"), IoError);
    CHECK_THROWS_AS(Video(0, 4, 4), NumericError);
  }

  TEST_CASE("negative samples are rejected") {
    TempDir dir("vio");
    Video v = random_video(2, 4, 4, 7);
    v(1, 0, 0) = -1.0f;
    save_video(v, dir / "neg.tif");
    CHECK_THROWS_AS(load_video(dir / "neg.tif"), NumericError);
  }

  TEST_CASE("mask round trips") {
    TempDir dir("vio");
    save_masks({}, dir / "empty.tif");
    CHECK(load_masks(dir / "empty.tif").empty());

    const std::vector<MaskImage> full{MaskImage::Constant(12, 10, true)};
    save_masks(full, dir / "full.tif");
    const auto full_back = load_masks(dir / "full.tif");
    REQUIRE(full_back.size() == 1);
    CHECK((full_back[0] == full[0]).all());

    std::mt19937_64 rng(8);
    std::vector<MaskImage> masks;
    for (int i = 0; i < 20; ++i) masks.push_back(vseg::testing::random_image(rng, 17, 23).array() > 0.5f);
    save_masks(masks, dir / "many.tif");
    const auto back = load_masks(dir / "many.tif");
    REQUIRE(back.size() == masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) CHECK((back[i] == masks[i]).all());

    CHECK_THROWS_AS(save_masks({MaskImage::Zero(3, 3), MaskImage::Zero(3, 4)}, dir / "bad.tif"), NumericError);
  }

  TEST_CASE("float image pages round trip") {
    TempDir dir("vio");
    std::mt19937_64 rng(9);
    std::vector<Image> pages{vseg::testing::random_image(rng, 8, 8), vseg::testing::random_image(rng, 8, 8)};
    save_images(pages, dir / "p.tif");
    const auto back = load_images(dir / "p.tif");
    REQUIRE(back.size() == 2);
    CHECK((back[0] == pages[0]).all());
    CHECK((back[1] == pages[1]).all());
  }
}
