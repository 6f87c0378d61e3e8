#include <cmath>
#include <vector>

#include "doctest.h"
#include "shapeseg/error.hpp"
#include "shapeseg/gradcheck.hpp"
#include "shapeseg/losses.hpp"
#include "shapeseg/ops.hpp"
#include "shapeseg/rng.hpp"
#include "shapeseg/vit.hpp"

using namespace shapeseg;

namespace {

Tensor row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({1, n}, std::move(v));
}

BinaryMask row_mask(std::vector<std::uint8_t> bits) {
  BinaryMask m(1, bits.size());
  m.bits = std::move(bits);
  return m;
}

BinaryMask square(std::size_t size, std::size_t top, std::size_t left, std::size_t side) {
  BinaryMask m(size, size);
  for (std::size_t r = top; r < top + side; ++r)
    for (std::size_t c = left; c < left + side; ++c) m.set(r, c, true);
  return m;
}

Tensor as_probs(const BinaryMask& m) {
  std::vector<double> v(m.bits.begin(), m.bits.end());
  return Tensor::from({m.rows, m.cols}, std::move(v));
}

ViTConfig tiny_vit(std::size_t image) {
  ViTConfig c;
  c.image_size = image;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  return c;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("bce at one half") {
  CHECK(distribution_loss(DistributionKind::bce, row({1}), row({0.5}), LossParams{}).item() ==
        doctest::Approx(0.69314718).epsilon(1e-8));
}

TEST_CASE("focal down-weights a confident positive") {
  LossParams lp;
  lp.focal_gamma = 2.0;
  const double v = distribution_loss(DistributionKind::focal, row({1}), row({0.9}), lp).item();
  CHECK(std::fabs(v - 0.00105361) < 1e-8);
}

TEST_CASE("focal with gamma 0 keeps only the positive bce term") {
  LossParams lp;
  lp.focal_gamma = 0.0;
  Tensor y = row({1, 0, 1, 1, 0});
  Tensor p = row({0.2, 0.7, 0.9, 0.55, 0.1});
  const double focal = distribution_loss(DistributionKind::focal, y, p, lp).item();
  double expect = 0;
  for (std::size_t i = 0; i < 5; ++i) expect -= y[i] * std::log(p[i]);
  CHECK(std::fabs(focal - expect / 5) < 1e-12);
  Tensor ones = row({1, 1, 1});
  Tensor q = row({0.3, 0.6, 0.95});
  CHECK(std::fabs(distribution_loss(DistributionKind::focal, ones, q, lp).item() -
                  distribution_loss(DistributionKind::bce, ones, q, lp).item()) < 1e-12);
}

TEST_CASE("weighted and balanced cross entropy") {
  LossParams lp;
  lp.class_weights = {1.0, 2.0, 3.0};
  Tensor y = row({1, 0});
  Tensor p = row({0.5, 0.5});
  CHECK(distribution_loss(DistributionKind::wce, y, p, lp, 2).item() ==
        doctest::Approx(3.0 * std::log(2.0) / 2).epsilon(1e-12));
  lp.balance_beta = 0.5;
  CHECK(distribution_loss(DistributionKind::balanced_ce, y, p, lp).item() ==
        doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(distribution_loss(DistributionKind::wce, y, p, lp, 5), InvalidParam);
}

TEST_CASE("dice loss values") {
  CHECK(std::fabs(region_loss(RegionKind::dice, row({1, 0}), row({1, 1}), LossParams{}).item() - 1.0 / 3.0) < 1e-6);
  CHECK(std::fabs(region_loss(RegionKind::dice, row({1, 0, 1}), row({1, 0, 1}), LossParams{}).item()) < 1e-6);
}

TEST_CASE("tversky at one half is dice") {
  SplitMix64 rng(5);
  std::vector<double> yv(20), pv(20);
  for (std::size_t i = 0; i < 20; ++i) {
    yv[i] = rng.uniform() < 0.3 ? 1 : 0;
    pv[i] = rng.uniform();
  }
  LossParams lp;
  lp.tversky_alpha = lp.tversky_beta = 0.5;
  const double t = region_loss(RegionKind::tversky, row(yv), row(pv), lp).item();
  const double d = region_loss(RegionKind::dice, row(yv), row(pv), lp).item();
  CHECK(std::fabs(t - d) < 1e-12);
}

TEST_CASE("focal tversky with gamma 1 is the tversky loss") {
  LossParams lp;
  lp.tversky_alpha = 0.7;
  lp.tversky_beta = 0.3;
  lp.focal_tversky_gamma = 1.0;
  Tensor y = row({1, 1, 0, 0});
  Tensor p = row({0.8, 0.4, 0.3, 0.1});
  CHECK(region_loss(RegionKind::focal_tversky, y, p, lp).item() == region_loss(RegionKind::tversky, y, p, lp).item());
}

TEST_CASE("compound reductions") {
  Tensor y = row({1, 0, 1, 0});
  Tensor p = row({0.9, 0.2, 0.6, 0.4});
  const double dice = region_loss(RegionKind::dice, y, p, LossParams{}).item();
  LossParams ell;
  ell.ell_alpha = 1.0;
  ell.ell_beta = 0.0;
  CHECK(compound_loss(CompoundKind::ell, y, p, ell).item() == dice);
  LossParams combo;
  combo.combo_alpha = 0.0;
  CHECK(compound_loss(CompoundKind::combo, y, p, combo).item() == dice);
}

TEST_CASE("ell composes the dice and bce values") {
  LossParams lp;
  lp.ell_alpha = lp.ell_beta = 0.5;
  const double clamped = 1.0 - kClampEps;
  const double bce = (-std::log(clamped) - std::log(1.0 - clamped)) / 2.0;
  const double v = compound_loss(CompoundKind::ell, row({1, 0}), row({1, 1}), lp).item();
  CHECK(std::fabs(v - (0.5 * (1.0 / 3.0) + 0.5 * bce)) < 1e-6);
}

TEST_CASE("verbatim combo subtracts the dice term") {
  LossParams lp;
  lp.combo_alpha = 0.25;
  Tensor y = row({1, 0});
  Tensor p = row({0.7, 0.2});
  const double ce = distribution_loss(DistributionKind::wce, y, p, lp).item();
  const double dice = region_loss(RegionKind::dice, y, p, lp).item();
  CHECK(compound_loss(CompoundKind::combo, y, p, lp, true).item() == doctest::Approx(0.25 * ce - 0.75 * dice));
  CHECK(compound_loss(CompoundKind::combo, y, p, lp, false).item() == doctest::Approx(0.25 * ce + 0.75 * dice));
}

TEST_CASE("boundary loss on a row") {
  SdmConfig cfg;
  BinaryMask y = row_mask({0, 0, 1, 0, 0});
  CHECK(hd_loss(y, row({0, 0, 0, 0, 1}), cfg).item() == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(hd_loss(y, row({0, 0, 1, 0, 0}), cfg).item() == 0.0);
  CHECK(hd_loss(row_mask({0, 0, 0}), row({0, 0, 0}), cfg).item() == 0.0);
}

TEST_CASE("embedding distances") {
  Tensor a = Tensor::from({3}, {1, 2, 3});
  Tensor b = Tensor::from({3}, {4, 5, 6});
  CHECK(embedding_distance(DistanceMeasure::cosine, a, a).value.item() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(embedding_distance(DistanceMeasure::cosine, a, b).value.item() == doctest::Approx(0.97463185).epsilon(1e-8));
  Tensor u = Tensor::from({2}, {1, 0});
  Tensor v = Tensor::from({2}, {0, 1});
  CHECK(embedding_distance(DistanceMeasure::manhattan, u, v).value.item() == 2.0);
  CHECK(embedding_distance(DistanceMeasure::euclidean, u, v).value.item() == doctest::Approx(std::sqrt(2.0)));
  CHECK(embedding_distance(DistanceMeasure::hamming, u, v).value.item() == 1.0);
  CHECK(embedding_distance(DistanceMeasure::jaccard, u, v).value.item() == 0.0);
}

TEST_CASE("cosine of a zero vector is flagged") {
  DistanceResult r = embedding_distance(DistanceMeasure::cosine, Tensor::zeros({3}), Tensor::from({3}, {1, 2, 3}));
  CHECK(r.zero_vector);
  CHECK(r.value.item() == 0.0);
}

TEST_CASE("shape term vanishes at perfect alignment") {
  ViTWeights vit = init_vit(tiny_vit(16), 7);
  BinaryMask label = square(16, 4, 5, 6);
  LossConfig cfg;
  CHECK(shape_sensitive_loss(as_probs(label), label, vit, cfg).item() == 0.0);
}

TEST_CASE("shape term stays within [0, 2]") {
  ViTWeights vit = init_vit(tiny_vit(16), 7);
  SplitMix64 rng(17);
  LossConfig cfg;
  for (int t = 0; t < 40; ++t) {
    BinaryMask label = square(16, rng.below(8), rng.below(8), 1 + rng.below(8));
    std::vector<double> p(256);
    for (double& x : p) x = rng.uniform();
    const double v = shape_sensitive_loss(Tensor::from({16, 16}, p), label, vit, cfg).item();
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
  }
}

TEST_CASE("a shifted square costs more than an aligned one") {
  ViTWeights vit = init_vit(ViTConfig{}, 7);
  BinaryMask label = square(64, 28, 28, 8);
  LossConfig cfg;
  const double aligned = shape_sensitive_loss(as_probs(label), label, vit, cfg).item();
  const double shifted = shape_sensitive_loss(as_probs(square(64, 28, 36, 8)), label, vit, cfg).item();
  CHECK(shifted > aligned);
}

TEST_CASE("straight-through input equals the hard map on binary probabilities") {
  BinaryMask m = square(16, 3, 3, 5);
  LossConfig cfg;
  Tensor in = prediction_sdm_input(as_probs(m), cfg);
  SignedDistanceMap hard = signed_distance(m, cfg.sdm);
  CHECK(std::vector<double>(in.data().begin(), in.data().end()) == hard.values);
}

TEST_CASE("composite blends base and shape terms") {
  ViTWeights vit = init_vit(tiny_vit(16), 7);
  BinaryMask label = square(16, 2, 3, 7);
  SplitMix64 rng(23);
  std::vector<double> pv(256);
  for (double& x : pv) x = rng.uniform();
  Tensor p = Tensor::from({16, 16}, pv);
  LossConfig cfg;
  cfg.blend_gamma = 0.5;
  cfg.blend_delta = 0.5;
  const double base = base_loss(p, label, cfg).item();
  const double ss = shape_sensitive_loss(p, label, vit, cfg).item();
  CHECK(total_loss(p, label, vit, cfg).item() == doctest::Approx(0.5 * base + 0.5 * ss).epsilon(1e-14));
  cfg.blend_gamma = 1.0;
  cfg.blend_delta = 0.0;
  CHECK(total_loss(p, label, vit, cfg).item() == base);
}

TEST_CASE("composite gradient on an 8x8 input") {
  ViTConfig vc;
  vc.image_size = 8;
  vc.patch_size = 4;
  vc.embed_dim = 8;
  vc.depth = 1;
  vc.heads = 2;
  ViTWeights vit = init_vit(vc, 7);
  BinaryMask label = square(8, 2, 2, 3);
  SplitMix64 rng(29);
  std::vector<double> pv(64);
  // Keep every probability clear of the threshold so finite differences
  // never flip the hard mask.
  for (double& x : pv) x = rng.uniform() < 0.5 ? rng.uniform(0.05, 0.4) : rng.uniform(0.6, 0.95);
  LossConfig cfg;
  const double err = grad_check([&](const Tensor& t) { return total_loss(t, label, vit, cfg); },
                                Tensor::from({8, 8}, pv, true), 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("label-only mode passes no gradient through the shape term") {
  ViTWeights vit = init_vit(tiny_vit(16), 7);
  BinaryMask label = square(16, 2, 3, 7);
  LossConfig cfg;
  cfg.sdm_gradient_mode = SdmGradientMode::label_only;
  Tensor p = Tensor::full({16, 16}, 0.7, true);
  shape_sensitive_loss(p, label, vit, cfg).backward();
  if (p.has_grad())
    for (double g : p.grad()) CHECK(g == 0.0);
}

TEST_CASE("name round trips and validation") {
  for (BaseLoss b : {BaseLoss::dice, BaseLoss::bce, BaseLoss::wce, BaseLoss::balanced_ce, BaseLoss::focal,
                     BaseLoss::tversky, BaseLoss::focal_tversky, BaseLoss::combo, BaseLoss::ell, BaseLoss::hd})
    CHECK(parse_base_loss(to_string(b)) == b);
  for (DistanceMeasure d : {DistanceMeasure::cosine, DistanceMeasure::euclidean, DistanceMeasure::manhattan,
                            DistanceMeasure::jaccard, DistanceMeasure::hamming})
    CHECK(parse_distance_measure(to_string(d)) == d);
  CHECK_FALSE(is_differentiable(DistanceMeasure::hamming));
  CHECK(is_differentiable(DistanceMeasure::cosine));
  LossConfig cfg;
  cfg.blend_gamma = -1;
  CHECK_THROWS_AS(cfg.validate(), InvalidParam);
}

}  // TEST_SUITE
