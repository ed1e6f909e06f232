#pragma once

#include <string>
#include <vector>

#include "mobonet/errors.hpp"

namespace mobo {

// RGB image, values in [0,1], planar channel-major storage.
struct ImageFrame {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // 3 * height * width

  ImageFrame() = default;
  ImageFrame(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.f) {}

  float& at(int c, int x, int y) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int x, int y) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Single-channel map, values in [0,1].
struct GrayMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayMap() = default;
  GrayMap(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.f) {}

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// Binary PPM (P6), 8 bits per channel, values scaled by 255.
ImageFrame read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageFrame& img);

// Binary PGM (P5). 8-bit files scale by 255; 16-bit files (maxval 65535,
// big-endian samples) scale by 65535. Reading auto-detects the depth.
GrayMap read_pgm(const std::string& path);
void write_pgm8(const std::string& path, const GrayMap& map);
void write_pgm16(const std::string& path, const GrayMap& map);

}  // namespace mobo
