#include "shapeseg/masks.hpp"

#include <algorithm>

namespace shapeseg {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

BinaryMask BinaryMask::transposed() const {
  BinaryMask t(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t.bits[c * rows + r] = bits[r * cols + c];
  return t;
}

BinaryMask LabelMap::mask_of(std::uint8_t cls) const {
  BinaryMask m(rows, cols);
  for (std::size_t i = 0; i < classes.size(); ++i) m.bits[i] = classes[i] == cls ? 1 : 0;
  return m;
}

}  // namespace shapeseg
