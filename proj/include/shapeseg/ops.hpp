#pragma once

#include <cstddef>
#include <vector>

#include "shapeseg/tensor.hpp"

// Differentiable tensor operations. Binary elementwise ops require equal
// shapes; the only broadcast is a single-element tensor against any shape.
// Anything else throws ShapeMismatch.

namespace shapeseg {

/// Lower clamp applied inside log() and to probabilities before logs.
inline constexpr double kClampEps = 1e-7;

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);

Tensor exp(const Tensor& x);
// Natural log of max(x, kClampEps).
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
// x^e for x >= 0; negative inputs are treated as 0.
Tensor pow_scalar(const Tensor& x, double e);
// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor relu(const Tensor& x);
// Exact (erf) GELU.
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Sum over one axis; the axis is removed (a 1-D input gives shape {1}).
Tensor sum_axis(const Tensor& x, std::size_t axis);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
// x[m x n] + bias[n] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
// Row-wise layer normalisation of x[m x n] with population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
// Parameter-free variant (gain 1, bias 0).
Tensor layer_norm(const Tensor& x, double eps);
Tensor softmax(const Tensor& x, std::size_t axis);

// x: [C x H x W] or [B x C x H x W]; w: [Co x C x k x k]; bias: [Co] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t pad);
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad);
// 2x2 window, stride 2, on [B x C x H x W]; ties route to the first maximum.
Tensor max_pool2x2(const Tensor& x);
Tensor upsample_nearest2x(const Tensor& x);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
// narrow(x, axis, index, 1) with the axis dropped.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);
Tensor reshape(const Tensor& x, Shape shape);

// Fused cosine similarity of two equally sized tensors, clamped to [-1, 1].
// Returns 0 with zero gradient when either norm is below 1e-12.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator+(double c, const Tensor& a) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator-(double c, const Tensor& a) { return add_scalar(neg(a), c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace shapeseg
