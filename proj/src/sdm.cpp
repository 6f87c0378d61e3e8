#include "shapeseg/sdm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shapeseg/error.hpp"

namespace shapeseg {
namespace {

constexpr std::int64_t kFar = std::numeric_limits<std::int64_t>::max() / 4;

// Lower envelope of the parabolas (q - v)^2 + f[v] over the finite sites v of
// one scanline. f and out have n entries; v and z are scratch of n and n + 1.
void envelope_1d(const std::int64_t* f, std::size_t n, std::int64_t* out, std::vector<std::int64_t>& v,
                 std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::ptrdiff_t k = -1;
  for (std::size_t qi = 0; qi < n; ++qi) {
    if (f[qi] >= kFar) continue;
    const auto q = static_cast<std::int64_t>(qi);
    while (true) {
      if (k < 0) {
        k = 0;
        v[0] = q;
        z[0] = -inf;
        z[1] = inf;
        break;
      }
      const std::int64_t p = v[static_cast<std::size_t>(k)];
      const double s = static_cast<double>((f[qi] + q * q) - (f[static_cast<std::size_t>(p)] + p * p)) /
                       static_cast<double>(2 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
        continue;
      }
      ++k;
      v[static_cast<std::size_t>(k)] = q;
      z[static_cast<std::size_t>(k)] = s;
      z[static_cast<std::size_t>(k) + 1] = inf;
      break;
    }
  }
  if (k < 0) {
    std::fill(out, out + n, kFar);
    return;
  }
  std::size_t j = 0;
  for (std::size_t qi = 0; qi < n; ++qi) {
    while (z[j + 1] < static_cast<double>(qi)) ++j;
    const std::int64_t d = static_cast<std::int64_t>(qi) - v[j];
    out[qi] = d * d + f[static_cast<std::size_t>(v[j])];
  }
}

void require_boundary(const BoundarySet& boundary, std::size_t rows, std::size_t cols) {
  if (boundary.empty()) throw EmptyBoundary("distance transform needs at least one boundary pixel");
  for (const auto& p : boundary)
    if (p.row >= rows || p.col >= cols) throw ShapeMismatch("boundary pixel outside the image");
}

Tensor to_distance(const std::vector<std::int64_t>& sq, std::size_t rows, std::size_t cols) {
  std::vector<double> d(sq.size());
  for (std::size_t i = 0; i < sq.size(); ++i) d[i] = std::sqrt(static_cast<double>(sq[i]));
  return Tensor::from({rows, cols}, std::move(d));
}

}  // namespace

void SdmConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InvalidThreshold("threshold " + std::to_string(threshold) + " not in (0, 1)");
  if (!(degenerate_fill > 0.0 && degenerate_fill <= 1.0))
    throw InvalidParam("degenerate_fill must lie in (0, 1]");
}

Tensor SignedDistanceMap::as_tensor() const { return Tensor::from({rows, cols}, values); }

BinaryMask mask_from_probs(const Tensor& probs, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InvalidThreshold("threshold " + std::to_string(threshold) + " not in (0, 1)");
  const auto& s = probs.shape();
  if (!(s.size() == 2 || (s.size() == 3 && s[0] == 1)))
    throw ShapeMismatch("mask_from_probs expects H x W, got " + shape_string(s));
  BinaryMask m(s[s.size() - 2], s[s.size() - 1]);
  const auto d = probs.data();
  for (std::size_t i = 0; i < d.size(); ++i) m.bits[i] = d[i] > threshold ? 1 : 0;
  return m;
}

BoundarySet boundary_of(const BinaryMask& mask) {
  BoundarySet out;
  const std::size_t h = mask.rows, w = mask.cols;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      // An axis of length 1 has no neighbours across it, so a 1 x N image
      // behaves as a 1-D signal. A lone 1 x 1 pixel is its own boundary.
      const bool vertical = h > 1 && (r == 0 || r + 1 == h || !mask.at(r - 1, c) || !mask.at(r + 1, c));
      const bool horizontal = w > 1 && (c == 0 || c + 1 == w || !mask.at(r, c - 1) || !mask.at(r, c + 1));
      const bool edge = vertical || horizontal || (h == 1 && w == 1);
      if (edge) out.push_back({r, c});
    }
  }
  return out;
}

std::vector<std::int64_t> edt_squared(const BoundarySet& boundary, std::size_t rows, std::size_t cols) {
  require_boundary(boundary, rows, cols);
  std::vector<std::int64_t> grid(rows * cols, kFar);
  for (const auto& p : boundary) grid[p.row * cols + p.col] = 0;

  // Column pass.
#pragma omp parallel
  {
    std::vector<std::int64_t> line(rows), res(rows), v(rows);
    std::vector<double> z(rows + 1);
#pragma omp for schedule(static)
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t r = 0; r < rows; ++r) line[r] = grid[r * cols + c];
      envelope_1d(line.data(), rows, res.data(), v, z);
      for (std::size_t r = 0; r < rows; ++r) grid[r * cols + c] = res[r];
    }
  }

  // Row pass.
  std::vector<std::int64_t> out(rows * cols);
#pragma omp parallel
  {
    std::vector<std::int64_t> v(cols);
    std::vector<double> z(cols + 1);
#pragma omp for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) envelope_1d(grid.data() + r * cols, cols, out.data() + r * cols, v, z);
  }
  return out;
}

std::vector<std::int64_t> edt_squared_bruteforce(const BoundarySet& boundary, std::size_t rows,
                                                 std::size_t cols) {
  require_boundary(boundary, rows, cols);
  std::vector<std::int64_t> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::int64_t best = kFar;
      for (const auto& p : boundary) {
        const auto dr = static_cast<std::int64_t>(r) - static_cast<std::int64_t>(p.row);
        const auto dc = static_cast<std::int64_t>(c) - static_cast<std::int64_t>(p.col);
        best = std::min(best, dr * dr + dc * dc);
      }
      out[r * cols + c] = best;
    }
  }
  return out;
}

Tensor edt(const BoundarySet& boundary, std::size_t rows, std::size_t cols) {
  return to_distance(edt_squared(boundary, rows, cols), rows, cols);
}

Tensor edt_bruteforce(const BoundarySet& boundary, std::size_t rows, std::size_t cols) {
  return to_distance(edt_squared_bruteforce(boundary, rows, cols), rows, cols);
}

double sdm_cap(std::size_t rows, std::size_t cols) {
  return std::sqrt(static_cast<double>(rows * rows + cols * cols));
}

SignedDistanceMap signed_distance(const BinaryMask& mask, const SdmConfig& cfg) {
  cfg.validate();
  SignedDistanceMap out;
  out.rows = mask.rows;
  out.cols = mask.cols;
  out.cap = sdm_cap(mask.rows, mask.cols);
  const BoundarySet boundary = boundary_of(mask);
  if (boundary.empty()) {
    out.values.assign(mask.rows * mask.cols, cfg.degenerate_fill);
    out.normalized = true;
    return out;
  }
  const auto sq = edt_squared(boundary, mask.rows, mask.cols);
  out.values.resize(sq.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double d = std::sqrt(static_cast<double>(sq[i]));
    out.values[i] = mask.bits[i] ? -d : d;  // boundary pixels have d == 0
  }
  for (const auto& p : boundary) out.values[p.row * mask.cols + p.col] = 0.0;
  out.normalized = cfg.normalize;
  if (cfg.normalize) {
    for (auto& v : out.values) v = std::clamp(v / out.cap, -1.0, 1.0);
  }
  return out;
}

std::pair<SignedDistanceMap, SignedDistanceMap> sdm_pair(const Tensor& probs, const BinaryMask& label,
                                                         const SdmConfig& cfg) {
  const BinaryMask pred = mask_from_probs(probs, cfg.threshold);
  if (pred.rows != label.rows || pred.cols != label.cols)
    throw ShapeMismatch("prediction and label sizes differ");
  return {signed_distance(pred, cfg), signed_distance(label, cfg)};
}

}  // namespace shapeseg
