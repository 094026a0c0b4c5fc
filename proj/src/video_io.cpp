#include "vseg/video_io.hpp"

#include "binary_io.hpp"

#include <tiffio.h>

#include <array>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>

namespace vseg {

Video::Video(int frames, int height, int width, double frame_rate)
    : Video(frames, height, width,
            std::vector<float>(static_cast<std::size_t>(std::max(frames, 0)) * std::max(height, 0) * std::max(width, 0)),
            frame_rate) {}

Video::Video(int frames, int height, int width, std::vector<float> data, double frame_rate)
    : frames_(frames), height_(height), width_(width), frame_rate_(frame_rate), data_(std::move(data)) {
  if (frames < 1 || height < 1 || width < 1) {
    throw NumericError("video dimensions must be positive, got " + std::to_string(frames) + "x" +
                       std::to_string(height) + "x" + std::to_string(width));
  }
  if (data_.size() != static_cast<std::size_t>(frames) * height * width) {
    throw NumericError("video data length does not match T*H*W");
  }
}

namespace {

constexpr std::array<char, 8> kRawMagic = {'V', 'S', 'E', 'G', 'V', '1', '\0', '\0'};

// libtiff reports through global callbacks; keep the latest message per thread.
thread_local std::string tiff_last_error;

void tiff_error_handler(const char* module, const char* fmt, va_list args) {
  char buf[1024];
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  tiff_last_error = module ? std::string(module) + ": " + buf : std::string(buf);
}

void install_tiff_handlers() {
  static std::once_flag once;
  std::call_once(once, [] {
    TIFFSetErrorHandler(tiff_error_handler);
    TIFFSetWarningHandler(nullptr);
  });
}

struct TiffCloser {
  void operator()(TIFF* tif) const { TIFFClose(tif); }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

TiffHandle open_tiff(const std::filesystem::path& path, const char* mode) {
  install_tiff_handlers();
  tiff_last_error.clear();
  TIFF* tif = TIFFOpen(path.string().c_str(), mode);
  if (!tif) {
    throw IoError("cannot open TIFF " + path.string() + (tiff_last_error.empty() ? "" : ": " + tiff_last_error));
  }
  return TiffHandle(tif);
}

bool has_raw_magic(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<char, 8> head{};
  return in.read(head.data(), head.size()) && head == kRawMagic;
}

// A TIFF whose first IFD offset is zero: the encoding of an empty page list.
bool is_empty_tiff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char head[8];
  if (!in.read(reinterpret_cast<char*>(head), 8)) return false;
  const bool little = head[0] == 'I' && head[1] == 'I' && head[2] == 42 && head[3] == 0;
  const bool big = head[0] == 'M' && head[1] == 'M' && head[2] == 0 && head[3] == 42;
  return (little || big) && head[4] == 0 && head[5] == 0 && head[6] == 0 && head[7] == 0;
}

template <typename T>
void widen_row(const unsigned char* src, float* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, src + i * sizeof(T), sizeof(T));
    dst[i] = static_cast<float>(v);
  }
}

struct PageStack {
  int pages = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;
  std::string description;
};

PageStack read_tiff_pages(const std::filesystem::path& path) {
  PageStack stack;
  if (is_empty_tiff(path)) return stack;
  auto tif = open_tiff(path, "r");
  const std::string name = path.string();
  int page = 0;
  do {
    std::uint32_t width = 0, height = 0;
    std::uint16_t bits = 1, samples = 1, format = SAMPLEFORMAT_UINT;
    TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width);
    TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &samples);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &format);
    if (page == 0) {
      char* desc = nullptr;
      if (TIFFGetField(tif.get(), TIFFTAG_IMAGEDESCRIPTION, &desc) && desc) stack.description = desc;
      stack.width = static_cast<int>(width);
      stack.height = static_cast<int>(height);
    } else if (static_cast<int>(width) != stack.width || static_cast<int>(height) != stack.height) {
      throw IoError(name + ": page " + std::to_string(page) + " is " + std::to_string(width) + "x" +
                    std::to_string(height) + ", expected " + std::to_string(stack.width) + "x" +
                    std::to_string(stack.height));
    }
    if (width == 0 || height == 0) throw IoError(name + ": page " + std::to_string(page) + " has zero size");
    if (samples != 1) {
      throw IoError(name + ": page " + std::to_string(page) + " has " + std::to_string(samples) +
                    " samples per pixel; only grayscale is supported");
    }
    void (*widen)(const unsigned char*, float*, std::size_t) = nullptr;
    if (format == SAMPLEFORMAT_UINT && bits == 8) widen = widen_row<std::uint8_t>;
    if (format == SAMPLEFORMAT_UINT && bits == 16) widen = widen_row<std::uint16_t>;
    if (format == SAMPLEFORMAT_IEEEFP && bits == 32) widen = widen_row<float>;
    if (!widen) {
      throw IoError(name + ": page " + std::to_string(page) + " has unsupported sample format (" +
                    std::to_string(bits) + "-bit, format code " + std::to_string(format) + ")");
    }

    const std::size_t offset = stack.data.size();
    stack.data.resize(offset + static_cast<std::size_t>(width) * height);
    float* out = stack.data.data() + offset;
    const std::size_t bytes_per_sample = bits / 8;

    if (TIFFIsTiled(tif.get())) {
      std::uint32_t tile_w = 0, tile_h = 0;
      TIFFGetField(tif.get(), TIFFTAG_TILEWIDTH, &tile_w);
      TIFFGetField(tif.get(), TIFFTAG_TILELENGTH, &tile_h);
      std::vector<unsigned char> tile(TIFFTileSize(tif.get()));
      std::vector<float> row(tile_w);
      for (std::uint32_t ty = 0; ty < height; ty += tile_h) {
        for (std::uint32_t tx = 0; tx < width; tx += tile_w) {
          if (TIFFReadTile(tif.get(), tile.data(), tx, ty, 0, 0) < 0) {
            throw IoError(name + ": page " + std::to_string(page) + ": " + tiff_last_error);
          }
          const std::uint32_t rows = std::min(tile_h, height - ty);
          const std::uint32_t cols = std::min(tile_w, width - tx);
          for (std::uint32_t r = 0; r < rows; ++r) {
            widen(tile.data() + static_cast<std::size_t>(r) * tile_w * bytes_per_sample, row.data(), cols);
            std::copy_n(row.data(), cols, out + static_cast<std::size_t>(ty + r) * width + tx);
          }
        }
      }
    } else {
      std::vector<unsigned char> line(TIFFScanlineSize(tif.get()));
      for (std::uint32_t y = 0; y < height; ++y) {
        if (TIFFReadScanline(tif.get(), line.data(), y, 0) < 0) {
          throw IoError(name + ": page " + std::to_string(page) + ": " + tiff_last_error);
        }
        widen(line.data(), out + static_cast<std::size_t>(y) * width, width);
      }
    }
    ++page;
  } while (TIFFReadDirectory(tif.get()));
  stack.pages = page;
  return stack;
}

enum class PageFormat { f32, u8 };

// Writes `pages` pages of height x width from a contiguous float buffer.
void write_tiff_pages(const std::filesystem::path& path, int pages, int height, int width, const float* data,
                      PageFormat format, const std::string& description) {
  if (path.empty()) throw IoError("empty output path");
  const std::size_t bytes_per_sample = format == PageFormat::f32 ? 4 : 1;
  const std::size_t page_bytes = static_cast<std::size_t>(height) * width * bytes_per_sample;
  const bool big = page_bytes * static_cast<std::size_t>(pages) > (std::size_t{3} << 30);
  auto tif = open_tiff(path, big ? "w8" : "w");
  std::vector<unsigned char> u8;
  for (int p = 0; p < pages; ++p) {
    TIFF* t = tif.get();
    TIFFSetField(t, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(width));
    TIFFSetField(t, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(height));
    TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, 1);
    TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, format == PageFormat::f32 ? 32 : 8);
    TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, format == PageFormat::f32 ? SAMPLEFORMAT_IEEEFP : SAMPLEFORMAT_UINT);
    TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
    TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
    TIFFSetField(t, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
    TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, static_cast<std::uint32_t>(height));
    if (p == 0 && !description.empty()) TIFFSetField(t, TIFFTAG_IMAGEDESCRIPTION, description.c_str());
    const float* src = data + static_cast<std::size_t>(p) * height * width;
    void* strip = const_cast<float*>(src);
    if (format == PageFormat::u8) {
      u8.resize(static_cast<std::size_t>(height) * width);
      for (std::size_t i = 0; i < u8.size(); ++i) u8[i] = src[i] != 0.0f ? 255 : 0;
      strip = u8.data();
    }
    if (TIFFWriteEncodedStrip(t, 0, strip, static_cast<tmsize_t>(page_bytes)) < 0 || !TIFFWriteDirectory(t)) {
      throw IoError("failed writing page " + std::to_string(p) + " of " + path.string() + ": " + tiff_last_error);
    }
  }
}

void write_empty_tiff(const std::filesystem::path& path) {
  if (path.empty()) throw IoError("empty output path");
  const std::vector<char> header = {'I', 'I', 42, 0, 0, 0, 0, 0};
  detail::write_file(path.string(), header);
}

double parse_frame_rate(const std::string& description) {
  const auto pos = description.find("frame_rate=");
  if (pos == std::string::npos) return 0.0;
  try {
    return std::stod(description.substr(pos + 11));
  } catch (...) {
    return 0.0;
  }
}

void check_intensities(const std::vector<float>& data, std::size_t frame_size, const std::string& source) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i]) || data[i] < 0.0f) {
      throw NumericError(source + ": page " + std::to_string(i / frame_size) +
                         " holds a negative or non-finite intensity");
    }
  }
}

}  // namespace

Video load_video_raw(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + name);
  const auto file_size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::array<char, 8> magic{};
  std::uint32_t dims[4];
  double fps = 0.0;
  if (!in.read(magic.data(), 8) || !in.read(reinterpret_cast<char*>(dims), sizeof(dims)) ||
      !in.read(reinterpret_cast<char*>(&fps), sizeof(fps))) {
    throw IoError(name + ": truncated VSEGV1 header");
  }
  if (magic != kRawMagic) throw IoError(name + ": not a VSEGV1 file");
  if (dims[3] != 0) throw IoError(name + ": unsupported VSEGV1 sample format code " + std::to_string(dims[3]));
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (file_size != 32 + count * 4) {
    throw IoError(name + ": expected " + std::to_string(32 + count * 4) + " bytes, found " +
                  std::to_string(file_size));
  }
  std::vector<float> data(count);
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 4))) {
    throw IoError(name + ": short read");
  }
  check_intensities(data, static_cast<std::size_t>(dims[1]) * dims[2], name);
  return Video(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]), std::move(data), fps);
}

void save_video_raw(const Video& video, const std::filesystem::path& path) {
  if (path.empty()) throw IoError("empty output path");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::uint32_t dims[4] = {static_cast<std::uint32_t>(video.frames()), static_cast<std::uint32_t>(video.height()),
                                 static_cast<std::uint32_t>(video.width()), 0};
  const double fps = video.frame_rate();
  out.write(kRawMagic.data(), 8);
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(&fps), sizeof(fps));
  out.write(reinterpret_cast<const char*>(video.data().data()), static_cast<std::streamsize>(video.data().size_bytes()));
  if (!out) throw IoError("write failed: " + path.string());
}

void save_video_tiff(const Video& video, const std::filesystem::path& path) {
  std::ostringstream desc;
  desc.precision(17);
  desc << "vseg frame_rate=" << video.frame_rate();
  write_tiff_pages(path, video.frames(), video.height(), video.width(), video.data().data(), PageFormat::f32,
                   desc.str());
}

Video load_video(const std::filesystem::path& path) {
  if (path.empty()) throw IoError("empty input path");
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  if (has_raw_magic(path)) return load_video_raw(path);
  PageStack stack = read_tiff_pages(path);
  if (stack.pages == 0) throw IoError(path.string() + ": TIFF holds no pages");
  check_intensities(stack.data, static_cast<std::size_t>(stack.height) * stack.width, path.string());
  return Video(stack.pages, stack.height, stack.width, std::move(stack.data), parse_frame_rate(stack.description));
}

void save_video(const Video& video, const std::filesystem::path& path) {
  if (path.empty()) throw IoError("empty output path");
  if (path.extension() == ".vsegv1") {
    save_video_raw(video, path);
  } else {
    save_video_tiff(video, path);
  }
}

void save_masks(const std::vector<MaskImage>& masks, const std::filesystem::path& path) {
  if (path.empty()) throw IoError("empty output path");
  if (masks.empty()) {
    write_empty_tiff(path);
    return;
  }
  const auto h = masks.front().rows();
  const auto w = masks.front().cols();
  std::vector<float> pages;
  pages.reserve(masks.size() * h * w);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].rows() != h || masks[i].cols() != w) {
      throw NumericError("mask " + std::to_string(i) + " dimensions differ from mask 0");
    }
    for (Eigen::Index k = 0; k < masks[i].size(); ++k) pages.push_back(masks[i].data()[k] ? 1.0f : 0.0f);
  }
  write_tiff_pages(path, static_cast<int>(masks.size()), static_cast<int>(h), static_cast<int>(w), pages.data(),
                   PageFormat::u8, "");
}

std::vector<MaskImage> load_masks(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  PageStack stack = read_tiff_pages(path);
  std::vector<MaskImage> masks;
  const std::size_t n = static_cast<std::size_t>(stack.height) * stack.width;
  for (int p = 0; p < stack.pages; ++p) {
    Eigen::Map<const Image> page(stack.data.data() + p * n, stack.height, stack.width);
    masks.emplace_back(page != 0.0f);
  }
  return masks;
}

void save_images(const std::vector<Image>& images, const std::filesystem::path& path) {
  if (path.empty()) throw IoError("empty output path");
  if (images.empty()) {
    write_empty_tiff(path);
    return;
  }
  const auto h = images.front().rows();
  const auto w = images.front().cols();
  std::vector<float> pages;
  pages.reserve(images.size() * h * w);
  for (const auto& img : images) {
    if (img.rows() != h || img.cols() != w) throw NumericError("image pages must share dimensions");
    pages.insert(pages.end(), img.data(), img.data() + img.size());
  }
  write_tiff_pages(path, static_cast<int>(images.size()), static_cast<int>(h), static_cast<int>(w), pages.data(),
                   PageFormat::f32, "");
}

std::vector<Image> load_images(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  PageStack stack = read_tiff_pages(path);
  std::vector<Image> images;
  const std::size_t n = static_cast<std::size_t>(stack.height) * stack.width;
  for (int p = 0; p < stack.pages; ++p) {
    images.emplace_back(Eigen::Map<const Image>(stack.data.data() + p * n, stack.height, stack.width));
  }
  return images;
}

}  // namespace vseg
