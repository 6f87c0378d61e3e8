#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "shapeseg/tensor.hpp"

namespace shapeseg {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Container format shared by every weight file:
//
//   "SSLW1\n"
//   repeated: "<name> <ndim> <d0> <d1> ...\n" followed by prod(d) doubles,
//             IEEE-754 binary64, little-endian, no padding.
//
// Names must not contain whitespace. read_weight_file throws IoError when the
// file cannot be opened and FormatError on a bad magic, header or truncation.
void write_weight_file(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_weight_file(const std::filesystem::path& path);

// Checks that `arrays` has exactly the names and shapes of `expected`, in order.
void expect_layout(const std::vector<NamedArray>& arrays, const std::vector<NamedArray>& expected);

}  // namespace shapeseg
