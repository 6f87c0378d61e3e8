#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "shapeseg/masks.hpp"

namespace shapeseg {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Binary NetPBM: "P5" (gray) or "P6" (rgb), then "<width> <height>\n255\n"
// and raw row-major bytes. Writers emit exactly "P5\n<w> <h>\n255\n".
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);

// round(clamp(v, 0, 1) * 255).
GrayImage quantize(std::span<const double> values, std::size_t width, std::size_t height);
std::vector<double> dequantize(const GrayImage& img);

// Class indices stored verbatim as gray levels.
GrayImage label_image(const LabelMap& labels);
LabelMap label_from_image(const GrayImage& img);

// Grayscale base with class 1 painted red and class 2 green.
RgbImage overlay(const GrayImage& base, const LabelMap& labels);

}  // namespace shapeseg
