#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "shapeseg/masks.hpp"
#include "shapeseg/tensor.hpp"

namespace shapeseg {

struct Pixel {
  std::size_t row = 0;
  std::size_t col = 0;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

// Boundary pixels in row-major order.
using BoundarySet = std::vector<Pixel>;

struct SdmConfig {
  double threshold = 0.5;
  bool normalize = true;
  double degenerate_fill = 1.0;

  // Throws InvalidThreshold / InvalidParam.
  void validate() const;
};

// Signed distance to the nearest boundary pixel: negative inside the
// foreground, zero on the boundary, positive outside.
struct SignedDistanceMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  bool normalized = false;
  // Divisor used when normalized (the image diagonal).
  double cap = 1.0;

  Tensor as_tensor() const;
  friend bool operator==(const SignedDistanceMap&, const SignedDistanceMap&) = default;
};

/// bit = 1 iff prob > threshold. probs is H x W (or 1 x H x W).
BinaryMask mask_from_probs(const Tensor& probs, double threshold);

/// Foreground pixels with a 4-neighbour that is background or off-image.
BoundarySet boundary_of(const BinaryMask& mask);

/// Exact squared Euclidean distance from each pixel to the nearest pixel of
/// `boundary`, via two passes of the 1-D lower envelope of parabolas
/// (Felzenszwalb & Huttenlocher). Columns first, then rows; each scanline is
/// independent and the passes run under OpenMP. Throws EmptyBoundary.
std::vector<std::int64_t> edt_squared(const BoundarySet& boundary, std::size_t rows, std::size_t cols);

/// O(H*W*|boundary|) direct minimisation; the oracle for edt_squared.
std::vector<std::int64_t> edt_squared_bruteforce(const BoundarySet& boundary, std::size_t rows,
                                                 std::size_t cols);

/// sqrt of edt_squared as an H x W tensor.
Tensor edt(const BoundarySet& boundary, std::size_t rows, std::size_t cols);
Tensor edt_bruteforce(const BoundarySet& boundary, std::size_t rows, std::size_t cols);

/// Image diagonal, the normalisation cap.
double sdm_cap(std::size_t rows, std::size_t cols);

/// Signed map of a mask. An empty boundary (empty mask) yields
/// +degenerate_fill everywhere, marked normalized.
SignedDistanceMap signed_distance(const BinaryMask& mask, const SdmConfig& cfg);

/// Thresholds the prediction and builds both maps with the same settings.
std::pair<SignedDistanceMap, SignedDistanceMap> sdm_pair(const Tensor& probs, const BinaryMask& label,
                                                         const SdmConfig& cfg);

}  // namespace shapeseg
