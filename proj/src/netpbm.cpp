#include "shapeseg/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "shapeseg/error.hpp"

namespace shapeseg {
namespace {

void write_netpbm(const std::filesystem::path& path, const char* magic, std::size_t w, std::size_t h,
                  std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << magic << '\n' << w << ' ' << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

struct Parsed {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> bytes;
};

Parsed read_netpbm(const std::filesystem::path& path, const std::string& magic, std::size_t channels) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (data.compare(0, 2, magic) != 0) throw FormatError(path.string() + ": expected magic " + magic);
  std::size_t pos = 2;
  auto next_number = [&]() -> std::size_t {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos, value = 0;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos])))
      value = value * 10 + static_cast<std::size_t>(data[pos++] - '0');
    if (pos == start || pos - start > 9) throw FormatError(path.string() + ": malformed header");
    return value;
  };
  Parsed p;
  p.width = next_number();
  p.height = next_number();
  const std::size_t maxval = next_number();
  if (p.width == 0 || p.height == 0) throw FormatError(path.string() + ": zero image dimension");
  if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported");
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos])))
    throw FormatError(path.string() + ": missing separator after header");
  ++pos;
  const std::size_t n = p.width * p.height * channels;
  if (data.size() - pos != n)
    throw FormatError(path.string() + ": expected " + std::to_string(n) + " pixel bytes, found " +
                      std::to_string(data.size() - pos));
  p.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(pos), data.end());
  return p;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height) throw FormatError("gray image size disagrees with dimensions");
  write_netpbm(path, "P5", img.width, img.height, img.pixels);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  Parsed p = read_netpbm(path, "P5", 1);
  return {p.width, p.height, std::move(p.bytes)};
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  if (img.rgb.size() != 3 * img.width * img.height) throw FormatError("rgb image size disagrees with dimensions");
  write_netpbm(path, "P6", img.width, img.height, img.rgb);
}

RgbImage read_ppm(const std::filesystem::path& path) {
  Parsed p = read_netpbm(path, "P6", 3);
  return {p.width, p.height, std::move(p.bytes)};
}

GrayImage quantize(std::span<const double> values, std::size_t width, std::size_t height) {
  if (values.size() != width * height) throw ShapeMismatch("quantize: value count disagrees with dimensions");
  GrayImage g{width, height, std::vector<std::uint8_t>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i)
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0));
  return g;
}

std::vector<double> dequantize(const GrayImage& img) {
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
  return v;
}

GrayImage label_image(const LabelMap& labels) { return {labels.cols, labels.rows, labels.classes}; }

LabelMap label_from_image(const GrayImage& img) {
  LabelMap m(img.height, img.width);
  m.classes = img.pixels;
  return m;
}

RgbImage overlay(const GrayImage& base, const LabelMap& labels) {
  if (base.width != labels.cols || base.height != labels.rows) throw ShapeMismatch("overlay: sizes differ");
  RgbImage out{base.width, base.height, std::vector<std::uint8_t>(3 * base.pixels.size())};
  for (std::size_t i = 0; i < base.pixels.size(); ++i) {
    std::uint8_t r = base.pixels[i], g = base.pixels[i], b = base.pixels[i];
    if (labels.classes[i] == 1) {
      r = 255, g = 0, b = 0;
    } else if (labels.classes[i] == 2) {
      r = 0, g = 255, b = 0;
    }
    out.rgb[3 * i] = r;
    out.rgb[3 * i + 1] = g;
    out.rgb[3 * i + 2] = b;
  }
  return out;
}

}  // namespace shapeseg
