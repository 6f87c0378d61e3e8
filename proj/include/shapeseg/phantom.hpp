#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "shapeseg/masks.hpp"
#include "shapeseg/tensor.hpp"

namespace shapeseg {

struct PhantomConfig {
  std::size_t image_size = 64;
  // Inclusive ranges [min, max] of curves per image.
  int catheter_min = 1, catheter_max = 1;
  int guidewire_min = 1, guidewire_max = 1;
  double catheter_width_min = 3.0, catheter_width_max = 4.5;
  double guidewire_width_min = 1.5, guidewire_width_max = 2.5;
  double contrast_min = 0.25, contrast_max = 0.45;
  double noise_amplitude = 0.05;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Point2 {
  double x = 0.0;  // column
  double y = 0.0;  // row
};

/// The polyline a curve was rasterised from, kept so label geometry can be
/// checked after the fact.
struct CurveTrace {
  std::uint8_t cls = 0;
  double width = 0.0;
  std::vector<Point2> polyline;
};

struct Sample {
  Tensor image;  // [1 x H x W], values in [0, 1]
  LabelMap label;
  std::vector<CurveTrace> curves;
};

/// Pure function of (cfg, index): the sample draws from
/// SplitMix64(derive_seed(cfg.seed, index)).
Sample gen_sample(const PhantomConfig& cfg, std::uint64_t index);

double foreground_fraction(const LabelMap& label);

/// Seeded shuffle of 0..n-1; the first floor(n * train_frac) go to train.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dataset(std::size_t n, double train_frac,
                                                                            std::uint64_t seed);

double point_segment_distance(Point2 p, Point2 a, Point2 b);

}  // namespace shapeseg
