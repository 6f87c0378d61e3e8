#include "shapeseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "shapeseg/error.hpp"
#include "shapeseg/rng.hpp"

namespace shapeseg {
namespace {

constexpr double kMaxStep = 0.25;

struct Curve {
  Point2 p[4];
};

Point2 bezier(const Curve& c, double t) {
  const double u = 1.0 - t;
  const double b0 = u * u * u, b1 = 3.0 * u * u * t, b2 = 3.0 * u * t * t, b3 = t * t * t;
  return {b0 * c.p[0].x + b1 * c.p[1].x + b2 * c.p[2].x + b3 * c.p[3].x,
          b0 * c.p[0].y + b1 * c.p[1].y + b2 * c.p[2].y + b3 * c.p[3].y};
}

// A roughly straight chord through the middle of the image, bent by two
// perpendicular control-point offsets.
Curve draw_curve(SplitMix64& rng, double n) {
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double cx = rng.uniform(0.3 * n, 0.7 * n);
  const double cy = rng.uniform(0.3 * n, 0.7 * n);
  const double length = rng.uniform(0.8 * n, 1.3 * n);
  const double dx = std::cos(theta), dy = std::sin(theta);
  const double bend1 = rng.uniform(-0.3 * n, 0.3 * n);
  const double bend2 = rng.uniform(-0.3 * n, 0.3 * n);
  Curve c;
  auto along = [&](double f, double off) {
    const double s = (f - 0.5) * length;
    return Point2{cx + s * dx - off * dy, cy + s * dy + off * dx};
  };
  c.p[0] = along(0.0, 0.0);
  c.p[1] = along(1.0 / 3.0, bend1);
  c.p[2] = along(2.0 / 3.0, bend2);
  c.p[3] = along(1.0, 0.0);
  return c;
}

// |B'(t)| <= 3 * max control-polygon edge, so this many uniform steps in t
// keeps consecutive samples within kMaxStep of each other.
std::vector<Point2> sample_polyline(const Curve& c) {
  double edge = 0.0;
  for (int i = 0; i < 3; ++i) edge = std::max(edge, std::hypot(c.p[i + 1].x - c.p[i].x, c.p[i + 1].y - c.p[i].y));
  const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(3.0 * edge / kMaxStep)));
  std::vector<Point2> pts(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) pts[i] = bezier(c, static_cast<double>(i) / static_cast<double>(steps));
  return pts;
}

// Distance from every pixel centre within reach of the polyline; +inf elsewhere.
std::vector<double> distance_field(const std::vector<Point2>& poly, std::size_t n, double reach) {
  std::vector<double> d(n * n, std::numeric_limits<double>::infinity());
  const auto lim = static_cast<double>(n) - 1.0;
  for (std::size_t s = 0; s + 1 < poly.size(); ++s) {
    const Point2 a = poly[s], b = poly[s + 1];
    const double x0 = std::max(0.0, std::floor(std::min(a.x, b.x) - reach));
    const double x1 = std::min(lim, std::ceil(std::max(a.x, b.x) + reach));
    const double y0 = std::max(0.0, std::floor(std::min(a.y, b.y) - reach));
    const double y1 = std::min(lim, std::ceil(std::max(a.y, b.y) + reach));
    if (x0 > x1 || y0 > y1) continue;
    for (auto y = static_cast<std::size_t>(y0); y <= static_cast<std::size_t>(y1); ++y)
      for (auto x = static_cast<std::size_t>(x0); x <= static_cast<std::size_t>(x1); ++x) {
        const double dist = point_segment_distance({static_cast<double>(x), static_cast<double>(y)}, a, b);
        double& slot = d[y * n + x];
        slot = std::min(slot, dist);
      }
  }
  return d;
}

}  // namespace

void PhantomConfig::validate() const {
  if (image_size < 4) throw InvalidConfig("phantom image_size must be at least 4");
  if (catheter_min < 0 || catheter_max < catheter_min || guidewire_min < 0 || guidewire_max < guidewire_min)
    throw InvalidConfig("phantom curve count ranges must satisfy 0 <= min <= max");
  if (catheter_width_min < 1.0 || guidewire_width_min < 1.0)
    throw InvalidConfig("phantom curve widths must be at least 1 px");
  if (catheter_width_max < catheter_width_min || guidewire_width_max < guidewire_width_min)
    throw InvalidConfig("phantom width ranges must satisfy min <= max");
  if (contrast_min < 0.0 || contrast_max < contrast_min || contrast_max > 1.0)
    throw InvalidConfig("phantom contrast range must lie in [0, 1]");
  if (noise_amplitude < 0.0 || noise_amplitude > 0.5) throw InvalidConfig("phantom noise amplitude must be in [0, 0.5]");
}

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / len2, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

Sample gen_sample(const PhantomConfig& cfg, std::uint64_t index) {
  cfg.validate();
  SplitMix64 rng(derive_seed(cfg.seed, index));
  const std::size_t n = cfg.image_size;
  const auto nd = static_cast<double>(n);

  const double level = rng.uniform(0.55, 0.75);
  const double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
  const double ripple = rng.uniform(0.0, 0.08);
  const double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5);
  const double phx = rng.uniform(), phy = rng.uniform();
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<double> img(n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double u = static_cast<double>(x) / nd, v = static_cast<double>(y) / nd;
      img[y * n + x] = level + gx * (u - 0.5) + gy * (v - 0.5) +
                       ripple * std::sin(two_pi * (fx * u + phx)) * std::cos(two_pi * (fy * v + phy));
    }

  Sample s;
  s.label = LabelMap(n, n);
  auto draw_class = [&](std::uint8_t cls, int lo, int hi, double wmin, double wmax) {
    const int count = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    for (int k = 0; k < count; ++k) {
      const double width = rng.uniform(wmin, wmax);
      const double contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
      const Curve c = draw_curve(rng, nd);
      CurveTrace trace{cls, width, sample_polyline(c)};
      const double half = 0.5 * width;
      const auto d = distance_field(trace.polyline, n, half + 1.0);
      for (std::size_t i = 0; i < n * n; ++i) {
        if (d[i] <= half) s.label.classes[i] = cls;
        const double coverage = std::clamp(half + 0.5 - d[i], 0.0, 1.0);
        img[i] -= contrast * coverage;
      }
      s.curves.push_back(std::move(trace));
    }
  };
  draw_class(1, cfg.catheter_min, cfg.catheter_max, cfg.catheter_width_min, cfg.catheter_width_max);
  draw_class(2, cfg.guidewire_min, cfg.guidewire_max, cfg.guidewire_width_min, cfg.guidewire_width_max);

  for (double& v : img) v = std::clamp(v + rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude), 0.0, 1.0);
  s.image = Tensor::from({1, n, n}, std::move(img));
  return s;
}

double foreground_fraction(const LabelMap& label) {
  if (label.classes.empty()) return 0.0;
  std::size_t fg = 0;
  for (auto c : label.classes) fg += c != 0;
  return static_cast<double>(fg) / static_cast<double>(label.classes.size());
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dataset(std::size_t n, double train_frac,
                                                                            std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw InvalidFraction("train_frac must lie strictly between 0 and 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed);
  rng.shuffle(order);
  // floor(n * frac) computed so that 0.7 * 10 gives 7, not 6.
  auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_frac + 1e-9));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {std::move(train), std::move(test)};
}

}  // namespace shapeseg
