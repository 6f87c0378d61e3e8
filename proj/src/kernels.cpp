#include "shapeseg/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <utility>
#include <vector>

namespace shapeseg::kernels {
namespace {

// Below this many multiply-adds a gemm runs on the calling thread only.
constexpr std::size_t kParallelWork = 1u << 16;

std::vector<double>& pack_buffer() {
  thread_local std::vector<double> buffer;
  return buffer;
}

std::vector<double>& panel_buffer() {
  thread_local std::vector<double> buffer;
  return buffer;
}

using v4d = double __attribute__((vector_size(32)));

v4d load4(const double* p) {
  v4d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

double lanes(v4d v) { return (v[0] + v[1]) + (v[2] + v[3]); }

// A Rows x 8 tile of C lives in registers while p runs over k, so each
// product is summed in ascending p exactly as in the naive triple loop.
// panel holds the k x 8 slice of B contiguously.
template <std::size_t Rows>
void tile_x8(const double* a, std::size_t k, const double* panel, double* c, std::size_t n, bool accumulate) {
  v4d acc[Rows][2];
  for (std::size_t r = 0; r < Rows; ++r) {
    acc[r][0] = accumulate ? load4(c + r * n) : v4d{};
    acc[r][1] = accumulate ? load4(c + r * n + 4) : v4d{};
  }
  for (std::size_t p = 0; p < k; ++p) {
    const v4d b0 = load4(panel + 8 * p);
    const v4d b1 = load4(panel + 8 * p + 4);
    for (std::size_t r = 0; r < Rows; ++r) {
      const double av = a[r * k + p];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    std::memcpy(c + r * n, &acc[r][0], sizeof(v4d));
    std::memcpy(c + r * n + 4, &acc[r][1], sizeof(v4d));
  }
}

// Dot products of rows x[0..rows) (stride k) with one y row. Lane l of each
// accumulator sums the products with p = l (mod 4); the k % 4 tail goes last.
template <std::size_t Rows>
void dot_rows(const double* x, std::size_t k, const double* y, double* out) {
  v4d acc[Rows] = {};
  const std::size_t k4 = k & ~std::size_t{3};
  for (std::size_t p = 0; p < k4; p += 4) {
    const v4d yv = load4(y + p);
    for (std::size_t r = 0; r < Rows; ++r) acc[r] += load4(x + r * k + p) * yv;
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    double s = lanes(acc[r]);
    for (std::size_t p = k4; p < k; ++p) s += x[r * k + p] * y[p];
    out[r] = s;
  }
}

// Output columns ox in [lo, hi) read input column ox + shift inside [0, w).
std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t shift, std::ptrdiff_t w, std::size_t ow) {
  const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-shift, 0, static_cast<std::ptrdiff_t>(ow));
  const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(w - shift, lo, static_cast<std::ptrdiff_t>(ow));
  return {lo, hi};
}

}  // namespace

std::span<double> scratch_buffer(std::size_t n) {
  thread_local std::vector<double> buffer;
  if (buffer.size() < n) buffer.resize(n);
  return {buffer.data(), n};
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  const double* ap = a.data();
  if (trans_a) {
    auto& packed = pack_buffer();
    packed.resize(m * k);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) packed[i * k + p] = a[p * m + i];
    ap = packed.data();
  }
  const double* bp = b.data();
  double* cp = c.data();
  const bool parallel = m * n * k >= kParallelWork;

  if (trans_b) {
    // Both operands are read along k, so each output is a contiguous dot
    // product. B rows are the outer loop so each is streamed once per four
    // rows of A.
#pragma omp parallel for schedule(static) if (parallel)
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = bp + j * k;
      std::size_t i = 0;
      for (; i + 4 <= m; i += 4) {
        double s[4];
        dot_rows<4>(ap + i * k, k, brow, s);
        for (std::size_t r = 0; r < 4; ++r) {
          double& dst = cp[(i + r) * n + j];
          dst = accumulate ? dst + s[r] : s[r];
        }
      }
      for (; i < m; ++i) {
        double s;
        dot_rows<1>(ap + i * k, k, brow, &s);
        double& dst = cp[i * n + j];
        dst = accumulate ? dst + s : s;
      }
    }
    return;
  }

  // Column panels of width 8 are packed once and swept by every row group;
  // each thread owns whole panels.
  const std::size_t panels = n / 8;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t t = 0; t < panels; ++t) {
    const std::size_t j = 8 * t;
    auto& panel = panel_buffer();
    panel.resize(8 * k);
    for (std::size_t p = 0; p < k; ++p) std::memcpy(panel.data() + 8 * p, bp + p * n + j, 8 * sizeof(double));
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) tile_x8<4>(ap + i * k, k, panel.data(), cp + i * n + j, n, accumulate);
    for (; i < m; ++i) tile_x8<1>(ap + i * k, k, panel.data(), cp + i * n + j, n, accumulate);
  }
  const std::size_t j_tail = 8 * panels;
  if (j_tail == n) return;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = cp + i * n;
    if (!accumulate) std::fill(crow + j_tail, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ap[i * k + p];
      for (std::size_t j = j_tail; j < n; ++j) crow[j] += av * bp[p * n + j];
    }
  }
}

void im2col(const ConvGeometry& g, std::span<const double> image, std::span<double> columns) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  const std::size_t rows = g.patch_size();
  const auto h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);

#pragma omp parallel for schedule(static) if (rows * oh * ow >= kParallelWork)
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t ch = row / (k * k);
    const auto ky = static_cast<std::ptrdiff_t>((row / k) % k);
    const auto kx = static_cast<std::ptrdiff_t>(row % k);
    const double* plane = image.data() + ch * g.height * g.width;
    double* out = columns.data() + row * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride) + ky -
                                static_cast<std::ptrdiff_t>(g.pad);
      double* dst = out + oy * ow;
      if (iy < 0 || iy >= h) {
        std::fill(dst, dst + ow, 0.0);
        continue;
      }
      const double* src = plane + iy * w;
      if (g.stride == 1) {
        const auto [lo, hi] = valid_range(kx - static_cast<std::ptrdiff_t>(g.pad), w, ow);
        std::fill(dst, dst + lo, 0.0);
        std::copy(src + lo + kx - static_cast<std::ptrdiff_t>(g.pad), src + hi + kx - static_cast<std::ptrdiff_t>(g.pad),
                  dst + lo);
        std::fill(dst + hi, dst + ow, 0.0);
        continue;
      }
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride) + kx -
                                  static_cast<std::ptrdiff_t>(g.pad);
        dst[ox] = (ix < 0 || ix >= w) ? 0.0 : src[ix];
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, std::span<const double> columns, std::span<double> image) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  const auto h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);

  // One thread per channel: rows of the same channel overlap in the image.
#pragma omp parallel for schedule(static) if (g.patch_size() * oh * ow >= kParallelWork)
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    double* plane = image.data() + ch * g.height * g.width;
    for (std::size_t r = 0; r < k * k; ++r) {
      const std::size_t row = ch * k * k + r;
      const auto ky = static_cast<std::ptrdiff_t>(r / k);
      const auto kx = static_cast<std::ptrdiff_t>(r % k);
      const double* src = columns.data() + row * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride) + ky -
                                  static_cast<std::ptrdiff_t>(g.pad);
        if (iy < 0 || iy >= h) continue;
        double* dst = plane + iy * w;
        if (g.stride == 1) {
          const std::ptrdiff_t shift = kx - static_cast<std::ptrdiff_t>(g.pad);
          const auto [lo, hi] = valid_range(shift, w, ow);
          const double* row = src + oy * ow;
          for (std::ptrdiff_t ox = lo; ox < hi; ++ox) dst[ox + shift] += row[ox];
          continue;
        }
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride) + kx -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (ix >= 0 && ix < w) dst[ix] += src[oy * ow + ox];
        }
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::size_t out_channels, std::span<const double> image,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out, std::span<double> scratch) {
  const std::size_t pixels = g.out_pixels();
  im2col(g, image, scratch);
  gemm(false, false, out_channels, pixels, g.patch_size(), weight, scratch, out, false);
  if (!bias.empty()) {
    for (std::size_t o = 0; o < out_channels; ++o) {
      double* row = out.data() + o * pixels;
      for (std::size_t p = 0; p < pixels; ++p) row[p] += bias[o];
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::size_t out_channels,
                     std::span<const double> image, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_image,
                     std::span<double> grad_weight, std::span<double> grad_bias,
                     std::span<double> scratch) {
  const std::size_t pixels = g.out_pixels();
  const std::size_t patch = g.patch_size();
  if (!grad_bias.empty()) {
    for (std::size_t o = 0; o < out_channels; ++o) {
      const double* row = grad_out.data() + o * pixels;
      double s = 0.0;
      for (std::size_t p = 0; p < pixels; ++p) s += row[p];
      grad_bias[o] += s;
    }
  }
  if (!grad_weight.empty()) {
    im2col(g, image, scratch);
    gemm(false, true, out_channels, patch, pixels, grad_out, scratch, grad_weight, true);
  }
  if (!grad_image.empty()) {
    gemm(true, false, patch, pixels, out_channels, weight, grad_out, scratch, false);
    col2im_add(g, scratch, grad_image);
  }
}

namespace reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::size_t out_channels, std::span<const double> image,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t o = 0; o < out_channels; ++o) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (std::size_t ch = 0; ch < g.channels; ++ch) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                              static_cast<std::ptrdiff_t>(g.pad);
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                  ix >= static_cast<std::ptrdiff_t>(g.width))
                continue;
              s += weight[((o * g.channels + ch) * k + ky) * k + kx] *
                   image[(ch * g.height + static_cast<std::size_t>(iy)) * g.width +
                         static_cast<std::size_t>(ix)];
            }
          }
        }
        out[(o * oh + oy) * ow + ox] = s;
      }
    }
  }
}

}  // namespace reference
}  // namespace shapeseg::kernels
