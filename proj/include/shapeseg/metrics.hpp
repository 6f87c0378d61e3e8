#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "shapeseg/masks.hpp"
#include "shapeseg/tensor.hpp"

namespace shapeseg {

struct ClassCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t union_size() const { return tp + fp + fn; }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

struct ConfusionCounts {
  std::vector<ClassCounts> per_class;
  std::uint64_t pixels = 0;
};

// Per-image scores. A class absent from both maps scores 1 for Dice and IoU
// and still enters mIoU.
struct MetricsReport {
  std::vector<double> dice;
  std::vector<double> jaccard;
  double miou = 0.0;
  double accuracy = 0.0;

  // Mean over classes 1..K-1.
  double foreground_dice() const;
  double foreground_jaccard() const;
};

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, std::size_t n_classes);
ConfusionCounts confusion(const LabelMap& pred, const LabelMap& gt, std::size_t n_classes);

MetricsReport evaluate(const ConfusionCounts& counts);

// Per-pixel argmax over the class axis of a [K x H x W] probability map;
// ties go to the lower class index.
LabelMap argmax_classes(const Tensor& probs);

// Dataset-level summary: the mean of per-image reports (macro average).
struct MetricsSummary {
  double dice = 0.0;  // foreground Dice
  double jaccard = 0.0;
  double miou = 0.0;
  double accuracy = 0.0;
  std::size_t images = 0;

  void add(const MetricsReport& r);
  MetricsSummary averaged() const;
};

}  // namespace shapeseg
