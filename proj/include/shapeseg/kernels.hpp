#pragma once

#include <cstddef>
#include <span>

// Dense numeric kernels behind the tensor ops.
//
// Two implementations share one signature set:
//   shapeseg::kernels            cache-blocked loops parallelised with OpenMP
//   shapeseg::kernels::reference plain loops, single threaded
//
// Every blocked kernel assigns each output element to exactly one thread and
// accumulates it in a fixed order, so results do not depend on the thread
// count. The reference versions sum in textbook order and may differ from the
// blocked ones in the last bits; tests compare the two with a tolerance.

namespace shapeseg::kernels {

struct ConvGeometry {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t patch_size() const { return channels * kernel * kernel; }
  std::size_t out_pixels() const { return out_height() * out_width(); }
};

// C[m x n] = op(A) * op(B), or C += op(A) * op(B) when accumulate is set.
// op(A) is m x k: A is stored m x k row-major, or k x m when trans_a.
// op(B) is k x n: B is stored k x n row-major, or n x k when trans_b.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);

// Per-thread workspace of at least n doubles. Contents are unspecified and
// the span stays valid until the next call on the same thread.
std::span<double> scratch_buffer(std::size_t n);

// Unfolds one C x H x W image into a (C*k*k) x (H'*W') column matrix.
void im2col(const ConvGeometry& g, std::span<const double> image, std::span<double> columns);

// Adjoint of im2col: scatters columns back and adds them into image.
void col2im_add(const ConvGeometry& g, std::span<const double> columns, std::span<double> image);

// out[Co x H'W'] = weight[Co x C*k*k] * im2col(image) (+ bias per row).
// scratch must hold patch_size() * out_pixels() values.
void conv2d_forward(const ConvGeometry& g, std::size_t out_channels, std::span<const double> image,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out, std::span<double> scratch);

// Accumulates weight/bias/image gradients for one image. Empty spans skip the
// corresponding gradient.
void conv2d_backward(const ConvGeometry& g, std::size_t out_channels,
                     std::span<const double> image, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_image,
                     std::span<double> grad_weight, std::span<double> grad_bias,
                     std::span<double> scratch);

namespace reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);

// Direct seven-loop convolution, no unfolding.
void conv2d_forward(const ConvGeometry& g, std::size_t out_channels, std::span<const double> image,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out);

}  // namespace reference

}  // namespace shapeseg::kernels
