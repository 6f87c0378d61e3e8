#include "shapeseg/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "shapeseg/error.hpp"
#include "shapeseg/gradcheck.hpp"
#include "shapeseg/losses.hpp"
#include "shapeseg/metrics.hpp"
#include "shapeseg/ops.hpp"
#include "shapeseg/rng.hpp"
#include "shapeseg/vit.hpp"

namespace shapeseg {
namespace {

constexpr double kOpTolerance = 1e-6;
constexpr double kCompositeTolerance = 1e-4;
constexpr double kIdentityTolerance = 1e-12;
constexpr std::size_t kSide = 16;

std::vector<double> uniform_values(SplitMix64& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor random_tensor(SplitMix64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), uniform_values(rng, n, lo, hi));
}

// Values in [lo, hi] that stay at least `gap` away from every point in `avoid`.
Tensor clear_of(SplitMix64& rng, Shape shape, double lo, double hi, std::vector<double> avoid, double gap) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (auto& x : v) {
    do {
      x = rng.uniform(lo, hi);
    } while (std::any_of(avoid.begin(), avoid.end(), [&](double a) { return std::fabs(x - a) < gap; }));
  }
  return Tensor::from(std::move(shape), std::move(v));
}

// Probabilities kept 0.05 away from the threshold so central differences
// never flip the hard mask.
Tensor threshold_safe_probs(SplitMix64& rng, Shape shape, double threshold) {
  Tensor p = clear_of(rng, std::move(shape), 0.02, 0.98, {threshold}, 0.05);
  return p;
}

BinaryMask random_mask(SplitMix64& rng, std::size_t rows, std::size_t cols, double density) {
  BinaryMask m(rows, cols);
  for (auto& b : m.bits) b = rng.uniform() < density ? 1 : 0;
  return m;
}

// A filled blob plus a line, so boundaries are non-trivial.
BinaryMask shape_mask(std::size_t side, std::size_t offset) {
  BinaryMask m(side, side);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double dr = static_cast<double>(r) - 6.0 - static_cast<double>(offset);
      const double dc = static_cast<double>(c) - 7.0;
      if (dr * dr + dc * dc <= 12.0 || (r == c + 2 && r > 8)) m.set(r, c, true);
    }
  return m;
}

CheckResult make(std::string name, double err, double tol, std::string detail = {}) {
  return {std::move(name), err < tol, err, tol, std::move(detail)};
}

// Reduces an op output to a scalar with fixed random weights so every
// output coordinate carries a distinct upstream gradient.
ScalarFn weighted(std::function<Tensor(const Tensor&)> op, const Tensor& weights) {
  return [op = std::move(op), weights](const Tensor& x) { return sum(mul(op(x), weights)); };
}

template <typename Op>
CheckResult op_check(const std::string& name, SplitMix64& rng, const Tensor& x, Op op, Shape out_shape) {
  const Tensor w = random_tensor(rng, std::move(out_shape));
  return make(name, grad_check(weighted(op, w), x), kOpTolerance);
}

CheckResult scalar_check(const std::string& name, const Tensor& x, const ScalarFn& f, double tol) {
  return make(name, grad_check(f, x), tol);
}

ViTConfig small_vit() {
  ViTConfig c;
  c.image_size = kSide;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  return c;
}

}  // namespace

CheckResult edt_oracle_check(std::size_t masks, std::uint64_t seed, const EdtFn& edt) {
  SplitMix64 rng(seed);
  std::vector<BinaryMask> cases;
  for (std::size_t i = 0; i < masks; ++i) {
    const std::size_t rows = 1 + rng.below(64), cols = 1 + rng.below(64);
    cases.push_back(random_mask(rng, rows, cols, rng.uniform(0.02, 0.9)));
  }
  for (std::size_t side : {1u, 7u, 64u}) {
    cases.emplace_back(side, side);  // empty
    BinaryMask full(side, side);
    std::fill(full.bits.begin(), full.bits.end(), 1);
    cases.push_back(full);
    BinaryMask single(side, side);
    single.set(side / 2, side / 3, true);
    cases.push_back(single);
  }
  double worst = 0.0;
  std::size_t compared = 0, mismatched = 0;
  for (const auto& m : cases) {
    const BoundarySet b = boundary_of(m);
    if (b.empty()) {
      bool threw = false;
      try {
        edt(b, m.rows, m.cols);
      } catch (const EmptyBoundary&) {
        threw = true;
      }
      if (!threw) ++mismatched, worst = std::max(worst, 1.0);
      continue;
    }
    const auto fast = edt(b, m.rows, m.cols);
    const auto slow = edt_squared_bruteforce(b, m.rows, m.cols);
    ++compared;
    if (fast.size() != slow.size()) {
      ++mismatched;
      worst = std::max(worst, 1.0);
      continue;
    }
    bool same = true;
    for (std::size_t i = 0; i < fast.size(); ++i) {
      const auto diff = fast[i] > slow[i] ? fast[i] - slow[i] : slow[i] - fast[i];
      worst = std::max(worst, static_cast<double>(diff));
      same = same && diff == 0;
    }
    mismatched += !same;
  }
  CheckResult r{"edt_oracle", mismatched == 0, worst, 0.5, {}};
  r.detail = std::to_string(compared) + " maps compared, " + std::to_string(mismatched) + " mismatched";
  return r;
}

std::vector<CheckResult> gradient_checks() {
  SplitMix64 rng(20240611);
  std::vector<CheckResult> out;
  const Shape sq{kSide, kSide};

  // Elementwise and reductions.
  const Tensor a = random_tensor(rng, sq), b = random_tensor(rng, sq);
  const Tensor pos = random_tensor(rng, sq, 0.5, 2.0);
  const Tensor off0 = clear_of(rng, sq, -1.0, 1.0, {0.0}, 0.05);
  out.push_back(op_check("add", rng, a, [&](const Tensor& x) { return add(x, b); }, sq));
  out.push_back(op_check("sub", rng, a, [&](const Tensor& x) { return sub(b, x); }, sq));
  out.push_back(op_check("mul", rng, a, [&](const Tensor& x) { return mul(x, b); }, sq));
  out.push_back(op_check("div", rng, a, [&](const Tensor& x) { return div(x, pos) + div(pos, add_scalar(mul(x, x), 1.0)); }, sq));
  out.push_back(op_check("scalar_ops", rng, a, [&](const Tensor& x) { return neg(mul_scalar(add_scalar(x, 0.3), 1.7)); }, sq));
  out.push_back(op_check("exp", rng, a, [](const Tensor& x) { return exp(x); }, sq));
  out.push_back(op_check("log", rng, pos, [](const Tensor& x) { return log(x); }, sq));
  out.push_back(op_check("sqrt", rng, pos, [](const Tensor& x) { return sqrt(x); }, sq));
  out.push_back(op_check("abs", rng, off0, [](const Tensor& x) { return abs(x); }, sq));
  out.push_back(op_check("pow_scalar", rng, pos, [](const Tensor& x) { return pow_scalar(x, 1.7); }, sq));
  out.push_back(op_check("clamp", rng, clear_of(rng, sq, -1.0, 1.0, {-0.5, 0.5}, 0.05),
                         [](const Tensor& x) { return clamp(x, -0.5, 0.5); }, sq));
  out.push_back(op_check("relu", rng, off0, [](const Tensor& x) { return relu(x); }, sq));
  out.push_back(op_check("gelu", rng, a, [](const Tensor& x) { return gelu(x); }, sq));
  out.push_back(op_check("sum", rng, a, [](const Tensor& x) { return sum(x); }, {1}));
  out.push_back(op_check("mean", rng, a, [](const Tensor& x) { return mean(x); }, {1}));
  out.push_back(op_check("sum_axis", rng, a, [](const Tensor& x) { return sum_axis(x, 0); }, {kSide}));

  // Linear algebra and normalisation.
  const Tensor m2 = random_tensor(rng, {kSide, 8});
  const Tensor row_bias = random_tensor(rng, {kSide});
  out.push_back(op_check("matmul", rng, a, [&](const Tensor& x) { return matmul(x, m2); }, {kSide, 8}));
  out.push_back(op_check("matmul_rhs", rng, m2, [&](const Tensor& x) { return matmul(a, x); }, {kSide, 8}));
  out.push_back(op_check("transpose", rng, m2, [](const Tensor& x) { return transpose(x); }, {8, kSide}));
  out.push_back(op_check("add_row_bias", rng, row_bias, [&](const Tensor& x) { return add_row_bias(a, x); }, sq));
  const Tensor gain = random_tensor(rng, {kSide}, 0.5, 1.5);
  out.push_back(op_check("layer_norm", rng, a, [&](const Tensor& x) { return layer_norm(x, gain, row_bias, 1e-5); }, sq));
  out.push_back(op_check("layer_norm_plain", rng, a, [](const Tensor& x) { return layer_norm(x, 1e-5); }, sq));
  out.push_back(op_check("softmax", rng, a, [](const Tensor& x) { return softmax(x, 1); }, sq));
  out.push_back(op_check("softmax_axis0", rng, a, [](const Tensor& x) { return softmax(x, 0); }, sq));

  // Spatial ops.
  const Tensor img = random_tensor(rng, {2, 2, kSide, kSide});
  const Tensor kernel = random_tensor(rng, {3, 2, 3, 3});
  const Tensor kbias = random_tensor(rng, {3});
  out.push_back(op_check("conv2d_input", rng, img, [&](const Tensor& x) { return conv2d(x, kernel, kbias, 1, 1); },
                         {2, 3, kSide, kSide}));
  out.push_back(op_check("conv2d_weight", rng, kernel, [&](const Tensor& x) { return conv2d(img, x, kbias, 1, 1); },
                         {2, 3, kSide, kSide}));
  out.push_back(op_check("conv2d_bias", rng, kbias, [&](const Tensor& x) { return conv2d(img, kernel, x, 1, 1); },
                         {2, 3, kSide, kSide}));
  out.push_back(op_check("conv2d_stride2", rng, img, [&](const Tensor& x) { return conv2d(x, kernel, 2, 0); },
                         {2, 3, 7, 7}));
  // Distinct values keep every pooling window's maximum unique.
  std::vector<double> ramp(2 * 2 * kSide * kSide);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>((i * 37) % ramp.size()) / 100.0;
  out.push_back(op_check("max_pool2x2", rng, Tensor::from({2, 2, kSide, kSide}, ramp),
                         [](const Tensor& x) { return max_pool2x2(x); }, {2, 2, kSide / 2, kSide / 2}));
  out.push_back(op_check("upsample_nearest2x", rng, random_tensor(rng, {1, 2, 8, 8}),
                         [](const Tensor& x) { return upsample_nearest2x(x); }, {1, 2, kSide, kSide}));
  out.push_back(op_check("concat", rng, a, [&](const Tensor& x) { return concat({x, b, x}, 1); }, {kSide, 3 * kSide}));
  out.push_back(op_check("narrow", rng, a, [](const Tensor& x) { return narrow(x, 1, 3, 5); }, {kSide, 5}));
  out.push_back(op_check("select", rng, img, [](const Tensor& x) { return select(x, 0, 1); }, {2, kSide, kSide}));
  out.push_back(op_check("reshape", rng, a, [](const Tensor& x) { return reshape(x, {4, 64}); }, {4, 64}));
  const Tensor va = random_tensor(rng, {32}), vb = random_tensor(rng, {32});
  out.push_back(op_check("cosine_similarity", rng, va, [&](const Tensor& x) { return cosine_similarity(x, vb); }, {1}));

  // Encoder.
  const ViTWeights vit = init_vit(small_vit(), 7);
  out.push_back(op_check("vit_features", rng, random_tensor(rng, sq),
                         [&](const Tensor& x) { return vit_features(vit, x); }, {vit.config.embed_dim}));

  // Loss zoo.
  LossParams params;
  const BinaryMask label = shape_mask(kSide, 0);
  const Tensor y = mask_tensor(label);
  const Tensor p = random_tensor(rng, sq, 0.05, 0.95);
  const std::pair<const char*, DistributionKind> dists[] = {{"bce", DistributionKind::bce},
                                                            {"wce", DistributionKind::wce},
                                                            {"balanced_ce", DistributionKind::balanced_ce},
                                                            {"focal", DistributionKind::focal}};
  for (const auto& [name, kind] : dists)
    out.push_back(scalar_check(std::string("loss_") + name, p,
                               [&, kind = kind](const Tensor& x) { return distribution_loss(kind, y, x, params); },
                               kOpTolerance));
  const std::pair<const char*, RegionKind> regions[] = {{"dice", RegionKind::dice},
                                                        {"tversky", RegionKind::tversky},
                                                        {"focal_tversky", RegionKind::focal_tversky}};
  for (const auto& [name, kind] : regions)
    out.push_back(scalar_check(std::string("loss_") + name, p,
                               [&, kind = kind](const Tensor& x) { return region_loss(kind, y, x, params); },
                               kOpTolerance));
  out.push_back(scalar_check("loss_combo", p,
                             [&](const Tensor& x) { return compound_loss(CompoundKind::combo, y, x, params); },
                             kOpTolerance));
  out.push_back(scalar_check("loss_ell", p,
                             [&](const Tensor& x) { return compound_loss(CompoundKind::ell, y, x, params); },
                             kOpTolerance));
  SdmConfig sdm;
  out.push_back(scalar_check("loss_hd", threshold_safe_probs(rng, sq, sdm.threshold),
                             [&](const Tensor& x) { return hd_loss(label, x, sdm); }, kOpTolerance));
  const Tensor fb = random_tensor(rng, {32});
  const Tensor fa = clear_of(rng, {32}, -1.0, 1.0, {}, 0.0);
  for (auto m : {DistanceMeasure::cosine, DistanceMeasure::euclidean, DistanceMeasure::manhattan}) {
    // Manhattan needs every coordinate difference clear of zero.
    Tensor x = fa;
    if (m == DistanceMeasure::manhattan) {
      std::vector<double> v(32);
      for (std::size_t i = 0; i < 32; ++i) v[i] = fb.data()[i] + (i % 2 ? 0.3 : -0.4);
      x = Tensor::from({32}, v);
    }
    out.push_back(scalar_check("distance_" + std::string(to_string(m)), x,
                               [&, m](const Tensor& t) { return embedding_distance(m, t, fb).value; }, kOpTolerance));
  }

  // Full composite: straight-through SDM -> encoder -> 1 - cosine, blended with Dice.
  LossConfig cfg;
  const Tensor probs1 = threshold_safe_probs(rng, sq, cfg.sdm.threshold);
  out.push_back(scalar_check("composite_single_class", probs1,
                             [&](const Tensor& x) { return total_loss(x, label, vit, cfg); }, kCompositeTolerance));
  LabelMap lm(kSide, kSide);
  const BinaryMask second = shape_mask(kSide, 3);
  for (std::size_t i = 0; i < lm.classes.size(); ++i) {
    if (label.bits[i]) lm.classes[i] = 1;
    if (second.bits[i] && !label.bits[i]) lm.classes[i] = 2;
  }
  const Tensor probs3 = threshold_safe_probs(rng, {3, kSide, kSide}, cfg.sdm.threshold);
  out.push_back(scalar_check("composite_multi_class", probs3,
                             [&](const Tensor& x) { return total_loss(x, lm, vit, cfg); }, kCompositeTolerance));
  for (auto m : {DistanceMeasure::euclidean, DistanceMeasure::manhattan}) {
    LossConfig c = cfg;
    c.distance = m;
    out.push_back(scalar_check("composite_" + std::string(to_string(m)), probs1,
                               [&, c](const Tensor& x) { return total_loss(x, label, vit, c); }, kCompositeTolerance));
  }
  return out;
}

std::vector<CheckResult> loss_identity_checks(std::size_t trials, std::uint64_t seed) {
  SplitMix64 rng(seed);
  double tversky_dice = 0.0, focal_bce = 0.0, ft_tversky = 0.0, delta_zero = 0.0;
  const ViTWeights vit = init_vit(small_vit(), 7);
  for (std::size_t t = 0; t < trials; ++t) {
    const BinaryMask label = random_mask(rng, kSide, kSide, rng.uniform(0.05, 0.5));
    const Tensor y = mask_tensor(label);
    const Tensor p = random_tensor(rng, {kSide, kSide}, 0.0, 1.0);
    LossParams params;
    params.tversky_alpha = params.tversky_beta = 0.5;
    tversky_dice = std::max(tversky_dice, std::fabs(region_loss(RegionKind::tversky, y, p, params).item() -
                                                    region_loss(RegionKind::dice, y, p, params).item()));
    params.focal_gamma = 0.0;
    // Only the y = 1 term of BCE survives in the focal form.
    const double bce_positive = mean(neg(mul(y, log(clamp(p, kClampEps, 1.0 - kClampEps))))).item();
    focal_bce = std::max(focal_bce,
                         std::fabs(distribution_loss(DistributionKind::focal, y, p, params).item() - bce_positive));
    params.tversky_alpha = rng.uniform(0.1, 0.9);
    params.tversky_beta = 1.0 - params.tversky_alpha;
    params.focal_tversky_gamma = 1.0;
    ft_tversky = std::max(ft_tversky, std::fabs(region_loss(RegionKind::focal_tversky, y, p, params).item() -
                                                region_loss(RegionKind::tversky, y, p, params).item()));
    LossConfig cfg;
    cfg.blend_gamma = rng.uniform(0.1, 1.0);
    cfg.blend_delta = 0.0;
    delta_zero = std::max(delta_zero, std::fabs(total_loss(p, label, vit, cfg).item() -
                                                cfg.blend_gamma * region_loss(RegionKind::dice, y, p, cfg.params).item()));
  }
  const std::string n = std::to_string(trials) + " random inputs";
  return {make("identity_tversky_half_is_dice", tversky_dice, kIdentityTolerance, n),
          make("identity_focal_gamma0_is_bce", focal_bce, kIdentityTolerance, n),
          make("identity_focal_tversky_gamma1", ft_tversky, kIdentityTolerance, n),
          make("identity_delta0_is_gamma_base", delta_zero, kIdentityTolerance, n)};
}

std::vector<CheckResult> metric_identity_checks(std::size_t trials, std::uint64_t seed) {
  SplitMix64 rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    LabelMap pred(kSide, kSide), gt(kSide, kSide);
    const double dp = rng.uniform(0.05, 0.6), dg = rng.uniform(0.05, 0.6);
    for (std::size_t i = 0; i < pred.classes.size(); ++i) {
      pred.classes[i] = rng.uniform() < dp ? static_cast<std::uint8_t>(1 + rng.below(2)) : 0;
      gt.classes[i] = rng.uniform() < dg ? static_cast<std::uint8_t>(1 + rng.below(2)) : 0;
    }
    const ConfusionCounts cc = confusion(pred, gt, 3);
    const MetricsReport r = evaluate(cc);
    for (std::size_t c = 0; c < 3; ++c) {
      if (cc.per_class[c].union_size() == 0) continue;
      worst = std::max(worst, std::fabs(r.jaccard[c] - r.dice[c] / (2.0 - r.dice[c])));
    }
  }
  LabelMap pred(2, 2), gt(2, 2);
  pred.classes = {1, 1, 0, 0};
  gt.classes = {1, 0, 0, 0};
  const MetricsReport r = evaluate(confusion(pred, gt, 2));
  const double hand = std::max({std::fabs(r.dice[1] - 2.0 / 3.0), std::fabs(r.jaccard[1] - 0.5),
                                std::fabs(r.accuracy - 0.75)});
  return {make("identity_jaccard_from_dice", worst, kIdentityTolerance, std::to_string(trials) + " random map pairs"),
          make("metrics_hand_count_2x2", hand, 1e-15, "dice 2/3, jaccard 1/2, accuracy 3/4")};
}

std::vector<CheckResult> run_selftest(const SelftestOptions& opt) {
  std::vector<CheckResult> all{edt_oracle_check(opt.edt_masks, opt.seed, opt.edt)};
  for (auto& r : gradient_checks()) all.push_back(std::move(r));
  for (auto& r : loss_identity_checks(opt.identity_trials, opt.seed)) all.push_back(std::move(r));
  for (auto& r : metric_identity_checks(opt.identity_trials * 10, opt.seed)) all.push_back(std::move(r));
  return all;
}

std::string format_report(const std::vector<CheckResult>& checks) {
  std::string s;
  for (const auto& c : checks) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s %-34s max_error=%.3e tol=%.1e", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                  c.max_error, c.tolerance);
    s += buf;
    if (!c.detail.empty()) s += "  " + c.detail;
    s += "\n";
  }
  return s;
}

bool all_passed(const std::vector<CheckResult>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

}  // namespace shapeseg
