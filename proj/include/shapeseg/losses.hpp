#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "shapeseg/masks.hpp"
#include "shapeseg/sdm.hpp"
#include "shapeseg/tensor.hpp"
#include "shapeseg/vit.hpp"

namespace shapeseg {

enum class DistributionKind { bce, wce, balanced_ce, focal };
enum class RegionKind { dice, tversky, focal_tversky };
enum class CompoundKind { combo, ell };
enum class DistanceMeasure { cosine, euclidean, manhattan, jaccard, hamming };
enum class SdmGradientMode { straight_through, label_only };
enum class BaseLoss { dice, bce, wce, balanced_ce, focal, tversky, focal_tversky, combo, ell, hd };

// Smoothing added to numerator and denominator of the region ratios.
inline constexpr double kRegionSmooth = 1e-6;

struct LossParams {
  double focal_gamma = 2.0;
  std::vector<double> class_weights{1.0, 1.0, 1.0};  // w_y, indexed by class
  double balance_beta = 0.5;
  double tversky_alpha = 0.5;
  double tversky_beta = 0.5;
  double focal_tversky_gamma = 0.75;
  double combo_alpha = 0.5;
  double ell_alpha = 0.5;
  double ell_beta = 0.5;

  void validate() const;  // InvalidParam
};

struct LossConfig {
  BaseLoss base = BaseLoss::dice;
  bool shape_sensitive = true;
  double blend_gamma = 0.5;  // weight of the base loss
  double blend_delta = 0.5;  // weight of the shape-sensitive term
  DistanceMeasure distance = DistanceMeasure::cosine;
  SdmGradientMode sdm_gradient_mode = SdmGradientMode::straight_through;
  // Slope of the straight-through surrogate, in pixels of signed distance per
  // unit of probability.
  double st_gain = 1.0;
  // Combo as printed in the loss table (alpha*wce - (1-alpha)*dice).
  bool combo_verbatim = false;
  LossParams params;
  SdmConfig sdm;

  void validate() const;
  bool uses_shape_term() const { return shape_sensitive && blend_delta > 0.0; }
};

std::string_view to_string(BaseLoss v);
std::string_view to_string(DistanceMeasure v);
std::string_view to_string(SdmGradientMode v);
BaseLoss parse_base_loss(std::string_view s);
DistanceMeasure parse_distance_measure(std::string_view s);
SdmGradientMode parse_gradient_mode(std::string_view s);

bool is_differentiable(DistanceMeasure m);
// Cosine and Jaccard are similarities (loss = 1 - value); the rest are distances.
bool is_similarity(DistanceMeasure m);

Tensor mask_tensor(const BinaryMask& mask);

// Pixel mean of the per-pixel loss. p is clamped to [1e-7, 1 - 1e-7];
// class_index picks w_y for wce.
Tensor distribution_loss(DistributionKind kind, const Tensor& y, const Tensor& p, const LossParams& params,
                         std::size_t class_index = 1);

// Soft Tversky index (2 tp + s) / (2 tp + 2a fn + 2b fp + s); equals the soft
// Dice score at a = b = 1/2.
Tensor tversky_index(const Tensor& y, const Tensor& p, double alpha, double beta);
Tensor region_loss(RegionKind kind, const Tensor& y, const Tensor& p, const LossParams& params);
Tensor compound_loss(CompoundKind kind, const Tensor& y, const Tensor& p, const LossParams& params,
                     bool combo_verbatim = false, std::size_t class_index = 1);

// mean((p - y) * (dG^2 - dS^2)) with unsigned pixel distances to the label and
// thresholded-prediction boundaries; the distances are constants.
Tensor hd_loss(const BinaryMask& y, const Tensor& p, const SdmConfig& cfg);

struct DistanceResult {
  Tensor value;
  bool zero_vector = false;  // cosine with a (near) zero argument; value is 0
};

DistanceResult embedding_distance(DistanceMeasure kind, const Tensor& a, const Tensor& b);

// Input fed to the encoder for the prediction side. straight_through:
//   sdm(mask(p)) - (st_gain / cap) * (p - mask(p))
// which equals the hard map whenever p is already binary and has slope
// -st_gain/cap with respect to p. label_only: the hard map as a constant.
Tensor prediction_sdm_input(const Tensor& probs, const LossConfig& cfg);

// Encoder features of a label map; cacheable since the encoder is frozen.
Tensor label_features(const BinaryMask& label, const ViTWeights& vit, const SdmConfig& cfg);

// 1 - similarity (cosine, jaccard) or the raw distance (others) between
// encoder features of prediction and label maps. Throws DegenerateFeatures
// if both feature vectors vanish.
Tensor shape_sensitive_loss(const Tensor& probs, const BinaryMask& label, const ViTWeights& vit,
                            const LossConfig& cfg, const Tensor* cached_label_features = nullptr);

Tensor base_loss(const Tensor& probs, const BinaryMask& label, const LossConfig& cfg, std::size_t class_index = 1);

// gamma * base + delta * shape term, single foreground class.
Tensor total_loss(const Tensor& probs, const BinaryMask& label, const ViTWeights& vit, const LossConfig& cfg,
                  const Tensor* cached_label_features = nullptr, std::size_t class_index = 1);

// probs: [K x H x W] class probabilities. Mean over foreground classes 1..K-1.
// cached, when given, holds label features for classes 1..K-1 in order.
Tensor total_loss(const Tensor& probs, const LabelMap& label, const ViTWeights& vit, const LossConfig& cfg,
                  const std::vector<Tensor>* cached = nullptr);

}  // namespace shapeseg
