#include "shapeseg/losses.hpp"

#include <cmath>

#include "shapeseg/error.hpp"
#include "shapeseg/ops.hpp"

namespace shapeseg {
namespace {

void require_same(const Tensor& y, const Tensor& p, const char* what) {
  if (y.numel() != p.numel())
    throw ShapeMismatch(std::string(what) + ": label " + shape_string(y.shape()) + " vs prediction " +
                        shape_string(p.shape()));
}

Tensor clamp_probs(const Tensor& p) { return clamp(p, kClampEps, 1.0 - kClampEps); }

// Reshape y to p's shape so the binary ops agree (label may be H x W, p 1 x H x W).
Tensor align(const Tensor& y, const Tensor& p) { return y.shape() == p.shape() ? y : reshape(y, p.shape()); }

Tensor as_image(const Tensor& probs) {
  const auto& s = probs.shape();
  if (s.size() == 2) return probs;
  if (s.size() == 3 && s[0] == 1) return reshape(probs, {s[1], s[2]});
  throw ShapeMismatch("expected an H x W probability map, got " + shape_string(s));
}

template <typename E>
struct Named {
  E value;
  std::string_view name;
};

constexpr Named<BaseLoss> kBaseNames[] = {
    {BaseLoss::dice, "dice"}, {BaseLoss::bce, "bce"}, {BaseLoss::wce, "wce"},
    {BaseLoss::balanced_ce, "balanced_ce"}, {BaseLoss::focal, "focal"}, {BaseLoss::tversky, "tversky"},
    {BaseLoss::focal_tversky, "focal_tversky"}, {BaseLoss::combo, "combo"}, {BaseLoss::ell, "ell"},
    {BaseLoss::hd, "hd"}};
constexpr Named<DistanceMeasure> kDistanceNames[] = {
    {DistanceMeasure::cosine, "cosine"}, {DistanceMeasure::euclidean, "euclidean"},
    {DistanceMeasure::manhattan, "manhattan"}, {DistanceMeasure::jaccard, "jaccard"},
    {DistanceMeasure::hamming, "hamming"}};
constexpr Named<SdmGradientMode> kModeNames[] = {{SdmGradientMode::straight_through, "straight_through"},
                                                 {SdmGradientMode::label_only, "label_only"}};

template <typename E, std::size_t N>
std::string_view name_of(const Named<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <typename E, std::size_t N>
E parse_named(const Named<E> (&table)[N], std::string_view s, const char* what) {
  for (const auto& e : table)
    if (e.name == s) return e.value;
  throw InvalidParam(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

// Support set {i : v_i > 0}.
std::vector<bool> positive_support(const Tensor& v) {
  std::vector<bool> s(v.numel());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = v[i] > 0.0;
  return s;
}

}  // namespace

std::string_view to_string(BaseLoss v) { return name_of(kBaseNames, v); }
std::string_view to_string(DistanceMeasure v) { return name_of(kDistanceNames, v); }
std::string_view to_string(SdmGradientMode v) { return name_of(kModeNames, v); }
BaseLoss parse_base_loss(std::string_view s) { return parse_named(kBaseNames, s, "loss"); }
DistanceMeasure parse_distance_measure(std::string_view s) { return parse_named(kDistanceNames, s, "distance measure"); }
SdmGradientMode parse_gradient_mode(std::string_view s) { return parse_named(kModeNames, s, "gradient mode"); }

bool is_differentiable(DistanceMeasure m) {
  return m == DistanceMeasure::cosine || m == DistanceMeasure::euclidean || m == DistanceMeasure::manhattan;
}

bool is_similarity(DistanceMeasure m) { return m == DistanceMeasure::cosine || m == DistanceMeasure::jaccard; }

void LossParams::validate() const {
  if (!(focal_gamma >= 0.0)) throw InvalidParam("focal_gamma must be >= 0");
  if (class_weights.empty()) throw InvalidParam("class_weights must not be empty");
  for (double w : class_weights)
    if (!(w > 0.0)) throw InvalidParam("class weights must be positive");
  if (!(balance_beta > 0.0 && balance_beta < 1.0)) throw InvalidParam("balance_beta must lie in (0, 1)");
  if (!(tversky_alpha >= 0.0 && tversky_beta >= 0.0)) throw InvalidParam("tversky alpha/beta must be >= 0");
  if (!(focal_tversky_gamma > 0.0)) throw InvalidParam("focal_tversky_gamma must be > 0");
  if (!(combo_alpha >= 0.0 && combo_alpha <= 1.0)) throw InvalidParam("combo_alpha must lie in [0, 1]");
  if (!(ell_alpha >= 0.0 && ell_beta >= 0.0)) throw InvalidParam("ell alpha/beta must be >= 0");
}

void LossConfig::validate() const {
  params.validate();
  sdm.validate();
  if (!(blend_gamma >= 0.0 && blend_delta >= 0.0)) throw InvalidParam("blend weights must be >= 0");
  if (!(blend_gamma + blend_delta > 0.0)) throw InvalidParam("blend_gamma + blend_delta must be > 0");
  if (!(st_gain >= 0.0)) throw InvalidParam("st_gain must be >= 0");
}

Tensor mask_tensor(const BinaryMask& mask) {
  std::vector<double> v(mask.bits.begin(), mask.bits.end());
  return Tensor::from({mask.rows, mask.cols}, std::move(v));
}

Tensor distribution_loss(DistributionKind kind, const Tensor& y_in, const Tensor& p_in, const LossParams& params,
                         std::size_t class_index) {
  require_same(y_in, p_in, "distribution_loss");
  if (!(params.focal_gamma >= 0.0)) throw InvalidParam("focal_gamma must be >= 0");
  if (!(params.balance_beta > 0.0 && params.balance_beta < 1.0)) throw InvalidParam("balance_beta must lie in (0, 1)");
  const Tensor y = align(y_in, p_in);
  const Tensor p = clamp_probs(p_in);
  const Tensor pos = y * log(p);  // y log p
  switch (kind) {
    case DistributionKind::bce:
      return mean(-(pos + (1.0 - y) * log(1.0 - p)));
    case DistributionKind::wce: {
      if (class_index >= params.class_weights.size()) throw InvalidParam("no class weight for class " + std::to_string(class_index));
      return mean(-params.class_weights[class_index] * pos);
    }
    case DistributionKind::balanced_ce:
      return mean(-params.balance_beta * pos - (1.0 - params.balance_beta) * ((1.0 - y) * log(1.0 - p)));
    case DistributionKind::focal:
      return mean(-(pow_scalar(1.0 - p, params.focal_gamma) * pos));
  }
  throw InvalidParam("unknown distribution loss");
}

Tensor tversky_index(const Tensor& y_in, const Tensor& p, double alpha, double beta) {
  require_same(y_in, p, "tversky_index");
  const Tensor y = align(y_in, p);
  const Tensor tp = sum(y * p);
  const Tensor fn = sum(y * (1.0 - p));
  const Tensor fp = sum((1.0 - y) * p);
  const Tensor num = 2.0 * tp + kRegionSmooth;
  return num / (2.0 * tp + (2.0 * alpha) * fn + (2.0 * beta) * fp + kRegionSmooth);
}

Tensor region_loss(RegionKind kind, const Tensor& y_in, const Tensor& p, const LossParams& params) {
  require_same(y_in, p, "region_loss");
  switch (kind) {
    case RegionKind::dice: {
      const Tensor y = align(y_in, p);
      return 1.0 - (2.0 * sum(y * p) + kRegionSmooth) / (sum(y) + sum(p) + kRegionSmooth);
    }
    case RegionKind::tversky:
      return 1.0 - tversky_index(y_in, p, params.tversky_alpha, params.tversky_beta);
    case RegionKind::focal_tversky:
      if (!(params.focal_tversky_gamma > 0.0)) throw InvalidParam("focal_tversky_gamma must be > 0");
      return pow_scalar(1.0 - tversky_index(y_in, p, params.tversky_alpha, params.tversky_beta),
                        params.focal_tversky_gamma);
  }
  throw InvalidParam("unknown region loss");
}

Tensor compound_loss(CompoundKind kind, const Tensor& y, const Tensor& p, const LossParams& params,
                     bool combo_verbatim, std::size_t class_index) {
  const Tensor dice = region_loss(RegionKind::dice, y, p, params);
  switch (kind) {
    case CompoundKind::combo: {
      const double a = params.combo_alpha;
      if (!(a >= 0.0 && a <= 1.0)) throw InvalidParam("combo_alpha must lie in [0, 1]");
      if (a == 0.0 && !combo_verbatim) return dice;
      const Tensor ce = distribution_loss(DistributionKind::wce, y, p, params, class_index);
      return combo_verbatim ? a * ce - (1.0 - a) * dice : a * ce + (1.0 - a) * dice;
    }
    case CompoundKind::ell: {
      if (params.ell_beta == 0.0) return params.ell_alpha == 1.0 ? dice : params.ell_alpha * dice;
      return params.ell_alpha * dice + params.ell_beta * distribution_loss(DistributionKind::bce, y, p, params);
    }
  }
  throw InvalidParam("unknown compound loss");
}

Tensor hd_loss(const BinaryMask& y, const Tensor& p_in, const SdmConfig& cfg) {
  cfg.validate();
  const Tensor p = as_image(p_in);
  if (p.size(0) != y.rows || p.size(1) != y.cols) throw ShapeMismatch("hd_loss label/prediction sizes differ");
  const double fill = cfg.degenerate_fill * sdm_cap(y.rows, y.cols);
  auto squared = [&](const BinaryMask& m) {
    const BoundarySet b = boundary_of(m);
    std::vector<double> d2(m.bits.size(), fill * fill);
    if (!b.empty()) {
      const auto sq = edt_squared(b, m.rows, m.cols);
      for (std::size_t i = 0; i < sq.size(); ++i) d2[i] = static_cast<double>(sq[i]);
    }
    return d2;
  };
  const auto dg = squared(y);
  const auto ds = squared(mask_from_probs(p, cfg.threshold));
  std::vector<double> diff(dg.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = dg[i] - ds[i];
  const Tensor weight = Tensor::from(p.shape(), std::move(diff));
  return mean((p - mask_tensor(y)) * weight);
}

DistanceResult embedding_distance(DistanceMeasure kind, const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel())
    throw ShapeMismatch("embedding_distance " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const Tensor bb = b.shape() == a.shape() ? b : reshape(b, a.shape());
  DistanceResult r;
  switch (kind) {
    case DistanceMeasure::cosine: {
      r.value = cosine_similarity(a, bb);
      double na = 0.0, nb = 0.0;
      for (double v : a.data()) na += v * v;
      for (double v : b.data()) nb += v * v;
      r.zero_vector = std::sqrt(na) < 1e-12 || std::sqrt(nb) < 1e-12;
      return r;
    }
    case DistanceMeasure::euclidean:
    {
      const Tensor d = a - bb;
      r.value = sqrt(sum(d * d));
      return r;
    }
    case DistanceMeasure::manhattan:
      r.value = sum(abs(a - bb));
      return r;
    case DistanceMeasure::jaccard:
    case DistanceMeasure::hamming: {
      const auto sa = positive_support(a), sb = positive_support(b);
      std::size_t inter = 0, uni = 0, differ = 0;
      for (std::size_t i = 0; i < sa.size(); ++i) {
        inter += sa[i] && sb[i];
        uni += sa[i] || sb[i];
        differ += sa[i] != sb[i];
      }
      if (kind == DistanceMeasure::jaccard) {
        r.value = Tensor::scalar(uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni));
      } else {
        r.value = Tensor::scalar(sa.empty() ? 0.0 : static_cast<double>(differ) / static_cast<double>(sa.size()));
      }
      return r;
    }
  }
  throw InvalidParam("unknown distance measure");
}

Tensor prediction_sdm_input(const Tensor& probs_in, const LossConfig& cfg) {
  const Tensor probs = as_image(probs_in);
  const BinaryMask pred = mask_from_probs(probs, cfg.sdm.threshold);
  const SignedDistanceMap sdm = signed_distance(pred, cfg.sdm);
  if (!sdm.normalized) throw InvalidParam("shape-sensitive loss needs normalized signed distance maps");
  const Tensor hard = sdm.as_tensor();
  if (cfg.sdm_gradient_mode == SdmGradientMode::label_only) return hard;
  const double slope = cfg.st_gain / sdm.cap;
  return hard - slope * (probs - mask_tensor(pred));
}

Tensor label_features(const BinaryMask& label, const ViTWeights& vit, const SdmConfig& cfg) {
  return vit_features(vit, signed_distance(label, cfg));
}

Tensor shape_sensitive_loss(const Tensor& probs_in, const BinaryMask& label, const ViTWeights& vit,
                            const LossConfig& cfg, const Tensor* cached_label_features) {
  const Tensor probs = as_image(probs_in);
  if (probs.size(0) != label.rows || probs.size(1) != label.cols)
    throw ShapeMismatch("shape_sensitive_loss prediction/label sizes differ");
  const Tensor target = cached_label_features ? *cached_label_features : label_features(label, vit, cfg.sdm);
  const Tensor features = vit_features(vit, prediction_sdm_input(probs, cfg));

  const auto d = embedding_distance(cfg.distance, features, target);
  if (d.zero_vector) {
    bool both = true;
    for (const Tensor* t : {&features, &target}) {
      double n = 0.0;
      for (double v : t->data()) n += v * v;
      both = both && std::sqrt(n) < 1e-12;
    }
    if (both) throw DegenerateFeatures("both feature vectors are zero");
  }
  return is_similarity(cfg.distance) ? 1.0 - d.value : d.value;
}

Tensor base_loss(const Tensor& probs_in, const BinaryMask& label, const LossConfig& cfg, std::size_t class_index) {
  const Tensor p = as_image(probs_in);
  const Tensor y = mask_tensor(label);
  const LossParams& lp = cfg.params;
  switch (cfg.base) {
    case BaseLoss::dice: return region_loss(RegionKind::dice, y, p, lp);
    case BaseLoss::tversky: return region_loss(RegionKind::tversky, y, p, lp);
    case BaseLoss::focal_tversky: return region_loss(RegionKind::focal_tversky, y, p, lp);
    case BaseLoss::bce: return distribution_loss(DistributionKind::bce, y, p, lp, class_index);
    case BaseLoss::wce: return distribution_loss(DistributionKind::wce, y, p, lp, class_index);
    case BaseLoss::balanced_ce: return distribution_loss(DistributionKind::balanced_ce, y, p, lp, class_index);
    case BaseLoss::focal: return distribution_loss(DistributionKind::focal, y, p, lp, class_index);
    case BaseLoss::combo: return compound_loss(CompoundKind::combo, y, p, lp, cfg.combo_verbatim, class_index);
    case BaseLoss::ell: return compound_loss(CompoundKind::ell, y, p, lp, false, class_index);
    case BaseLoss::hd: return hd_loss(label, p, cfg.sdm);
  }
  throw InvalidParam("unknown base loss");
}

Tensor total_loss(const Tensor& probs, const BinaryMask& label, const ViTWeights& vit, const LossConfig& cfg,
                  const Tensor* cached_label_features, std::size_t class_index) {
  const Tensor base = base_loss(probs, label, cfg, class_index);
  const Tensor weighted = cfg.blend_gamma == 1.0 ? base : cfg.blend_gamma * base;
  if (!cfg.uses_shape_term()) return weighted;
  return weighted + cfg.blend_delta * shape_sensitive_loss(probs, label, vit, cfg, cached_label_features);
}

Tensor total_loss(const Tensor& probs, const LabelMap& label, const ViTWeights& vit, const LossConfig& cfg,
                  const std::vector<Tensor>* cached) {
  if (probs.dim() != 3) throw ShapeMismatch("multi-class total_loss expects K x H x W, got " + shape_string(probs.shape()));
  const std::size_t k = probs.size(0);
  if (k < 2) throw ShapeMismatch("need at least one foreground class");
  if (probs.size(1) != label.rows || probs.size(2) != label.cols)
    throw ShapeMismatch("label map size differs from prediction");
  if (cached && cached->size() != k - 1) throw ShapeMismatch("cached label features must cover every foreground class");
  Tensor acc;
  for (std::size_t c = 1; c < k; ++c) {
    const Tensor term = total_loss(select(probs, 0, c), label.mask_of(static_cast<std::uint8_t>(c)), vit, cfg,
                                   cached ? &(*cached)[c - 1] : nullptr, c);
    acc = acc.defined() ? acc + term : term;
  }
  return k == 2 ? acc : acc * (1.0 / static_cast<double>(k - 1));
}

}  // namespace shapeseg
