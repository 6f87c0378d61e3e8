#include "shapeseg/metrics.hpp"

#include "shapeseg/error.hpp"

namespace shapeseg {

double MetricsReport::foreground_dice() const {
  if (dice.size() < 2) return dice.empty() ? 0.0 : dice[0];
  double s = 0.0;
  for (std::size_t c = 1; c < dice.size(); ++c) s += dice[c];
  return s / static_cast<double>(dice.size() - 1);
}

double MetricsReport::foreground_jaccard() const {
  if (jaccard.size() < 2) return jaccard.empty() ? 0.0 : jaccard[0];
  double s = 0.0;
  for (std::size_t c = 1; c < jaccard.size(); ++c) s += jaccard[c];
  return s / static_cast<double>(jaccard.size() - 1);
}

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                          std::size_t n_classes) {
  if (pred.size() != gt.size())
    throw ShapeMismatch("prediction has " + std::to_string(pred.size()) + " pixels, label " + std::to_string(gt.size()));
  ConfusionCounts out;
  out.per_class.resize(n_classes);
  out.pixels = pred.size();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= n_classes || gt[i] >= n_classes)
      throw IndexOutOfRange("class index at pixel " + std::to_string(i) + " exceeds " + std::to_string(n_classes - 1));
    if (pred[i] == gt[i]) {
      out.per_class[gt[i]].tp++;
    } else {
      out.per_class[pred[i]].fp++;
      out.per_class[gt[i]].fn++;
    }
  }
  for (auto& c : out.per_class) c.tn = out.pixels - c.tp - c.fp - c.fn;
  return out;
}

ConfusionCounts confusion(const LabelMap& pred, const LabelMap& gt, std::size_t n_classes) {
  if (pred.rows != gt.rows || pred.cols != gt.cols) throw ShapeMismatch("label maps differ in size");
  return confusion(pred.classes, gt.classes, n_classes);
}

MetricsReport evaluate(const ConfusionCounts& counts) {
  MetricsReport r;
  std::uint64_t correct = 0;
  double iou_sum = 0.0;
  for (const auto& c : counts.per_class) {
    correct += c.tp;
    if (c.union_size() == 0) {
      r.dice.push_back(1.0);
      r.jaccard.push_back(1.0);
    } else {
      const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
      r.dice.push_back(2.0 * tp / (2.0 * tp + fp + fn));
      r.jaccard.push_back(tp / (tp + fp + fn));
    }
    iou_sum += r.jaccard.back();
  }
  r.miou = counts.per_class.empty() ? 0.0 : iou_sum / static_cast<double>(counts.per_class.size());
  r.accuracy = counts.pixels == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(counts.pixels);
  return r;
}

LabelMap argmax_classes(const Tensor& probs) {
  if (probs.dim() != 3) throw ShapeMismatch("argmax_classes expects K x H x W, got " + shape_string(probs.shape()));
  const std::size_t k = probs.size(0), h = probs.size(1), w = probs.size(2);
  LabelMap out(h, w);
  const auto d = probs.data();
  for (std::size_t i = 0; i < h * w; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (d[c * h * w + i] > d[best * h * w + i]) best = c;
    out.classes[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

void MetricsSummary::add(const MetricsReport& r) {
  dice += r.foreground_dice();
  jaccard += r.foreground_jaccard();
  miou += r.miou;
  accuracy += r.accuracy;
  images += 1;
}

MetricsSummary MetricsSummary::averaged() const {
  MetricsSummary m = *this;
  if (images == 0) return m;
  const double n = static_cast<double>(images);
  m.dice /= n;
  m.jaccard /= n;
  m.miou /= n;
  m.accuracy /= n;
  return m;
}

}  // namespace shapeseg
