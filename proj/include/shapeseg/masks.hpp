#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace shapeseg {

// Per-pixel foreground flags, row-major.
struct BinaryMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::size_t r, std::size_t c) : rows(r), cols(c), bits(r * c, 0) {}

  bool at(std::size_t r, std::size_t c) const { return bits[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool on) { bits[r * cols + c] = on ? 1 : 0; }
  std::size_t count() const;
  BinaryMask transposed() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Per-pixel class index, row-major. 0 is background.
struct LabelMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> classes;

  LabelMap() = default;
  LabelMap(std::size_t r, std::size_t c) : rows(r), cols(c), classes(r * c, 0) {}

  std::uint8_t at(std::size_t r, std::size_t c) const { return classes[r * cols + c]; }
  BinaryMask mask_of(std::uint8_t cls) const;
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

}  // namespace shapeseg
