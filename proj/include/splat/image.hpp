#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splat/errors.hpp"

namespace splat {

// Linear-light RGB image, row-major, channel-interleaved, values nominally
// in [0,1]. All loss/metric math runs on this type in double precision.
struct Image {
  int width = 0, height = 0;
  std::vector<double> px;  // height*width*3

  Image() = default;
  Image(int w, int h) : width(w), height(h), px(size_t(w) * h * 3, 0.0) {}

  double& at(int y, int x, int c) { return px[(size_t(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return px[(size_t(y) * width + x) * 3 + c]; }
  size_t size() const { return px.size(); }
};

double linear_to_srgb(double v);
double srgb_to_linear(double v);

// 8-bit PNG with the standard sRGB transfer; values clamped to [0,1].
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Lossless float dump for metric computation: magic "PTIMG1\0\0",
// u32 width, u32 height, then height*width*3 f32 little-endian.
void write_image_dump(const std::string& path, const Image& img);
Image read_image_dump(const std::string& path);

}  // namespace splat
