#include "vseg/evaluation.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace vseg {

namespace {

// Kept free of Eigen temporaries so nothing is clobbered by libpng's longjmp.
void write_rgb_png(const std::vector<png_byte>& rgb, png_uint_32 w, png_uint_32 h, const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (png_uint_32 y = 0; y < h; ++y) png_write_row(png, &rgb[static_cast<std::size_t>(y) * w * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_overlay_png(const std::vector<MaskImage>& preds, const std::vector<MaskImage>& gts,
                       const Image* background, const std::filesystem::path& path) {
  Eigen::Index h = 0, w = 0;
  if (background) {
    h = background->rows();
    w = background->cols();
  } else if (!preds.empty()) {
    h = preds.front().rows();
    w = preds.front().cols();
  } else if (!gts.empty()) {
    h = gts.front().rows();
    w = gts.front().cols();
  }
  if (h == 0 || w == 0) throw NumericError("overlay needs a background or at least one mask");

  MaskImage pred_any = MaskImage::Constant(h, w, false);
  MaskImage gt_any = MaskImage::Constant(h, w, false);
  for (const auto& m : preds) {
    if (m.rows() != h || m.cols() != w) throw NumericError("overlay mask dimensions differ");
    pred_any = pred_any || m;
  }
  for (const auto& m : gts) {
    if (m.rows() != h || m.cols() != w) throw NumericError("overlay mask dimensions differ");
    gt_any = gt_any || m;
  }
  Image gray = Image::Zero(h, w);
  if (background && background->size() > 0) {
    const float lo = background->minCoeff();
    const float hi = background->maxCoeff();
    if (hi > lo) gray = (*background - lo) / (hi - lo);
  }

  std::vector<png_byte> rgb(static_cast<std::size_t>(h) * w * 3);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const auto g = static_cast<png_byte>(std::clamp(gray(y, x) * 160.0f, 0.0f, 160.0f));
      png_byte* px = &rgb[(y * w + x) * 3];
      px[0] = pred_any(y, x) ? 255 : g;
      px[1] = gt_any(y, x) ? 255 : g;
      px[2] = g;
    }
  }

  write_rgb_png(rgb, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), path);
}

}  // namespace vseg
