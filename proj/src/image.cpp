#include "splat/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>

#include "splat/serial.hpp"

namespace splat {

double linear_to_srgb(double v) {
  if (v <= 0.0031308) return 12.92 * v;
  return 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double srgb_to_linear(double v) {
  if (v <= 0.04045) return v / 12.92;
  return std::pow((v + 0.055) / 1.055, 2.4);
}

namespace {

struct FileCloser {
  FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

void write_png(const std::string& path, const Image& img) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ParseError(path + ": cannot open for writing");
  FileCloser closer{f};
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ParseError(path + ": libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ParseError(path + ": libpng write failed");
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> row(size_t(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = img.at(y, x, c);
        if (v < 0) v = 0;
        if (v > 1) v = 1;
        row[size_t(x) * 3 + c] =
            static_cast<uint8_t>(std::lround(linear_to_srgb(v) * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ParseError(path + ": cannot open");
  FileCloser closer{f};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path + ": libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path + ": not a valid PNG");
  }
  png_init_io(png, f);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  int w = png_get_image_width(png, info);
  int h = png_get_image_height(png, info);
  Image img(w, h);
  std::vector<uint8_t> row(size_t(w) * 3);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = srgb_to_linear(row[size_t(x) * 3 + c] / 255.0);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_image_dump(const std::string& path, const Image& img) {
  ByteWriter w;
  w.raw("PTIMG1\0\0", 8);
  w.u32(static_cast<uint32_t>(img.width));
  w.u32(static_cast<uint32_t>(img.height));
  w.f32_array_from_f64(img.px.data(), img.px.size());
  write_file_bytes(path, w.bytes);
}

Image read_image_dump(const std::string& path) {
  auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path);
  r.expect_magic("PTIMG1\0");
  uint32_t w = r.u32();
  uint32_t h = r.u32();
  if (w == 0 || h == 0 || uint64_t(w) * h > (uint64_t(1) << 32))
    throw ParseError(path + ": implausible image dimensions");
  Image img(static_cast<int>(w), static_cast<int>(h));
  r.f64_array_from_f32(img.px.data(), img.px.size());
  return img;
}

}  // namespace splat
