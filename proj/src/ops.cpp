#include "shapeseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "shapeseg/error.hpp"
#include "shapeseg/kernels.hpp"

namespace shapeseg {
namespace {

using detail::Node;

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size())
    throw ShapeMismatch("axis " + std::to_string(axis) + " invalid for " + shape_string(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename F, typename DA, typename DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  bool a_scalar = false, b_scalar = false;
  if (a.shape() != b.shape()) {
    if (a.numel() == 1) {
      a_scalar = true;
    } else if (b.numel() == 1) {
      b_scalar = true;
    } else {
      throw ShapeMismatch(std::string(name) + ": " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
    }
  }
  const Shape& shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[a_scalar ? 0 : i], bd[b_scalar ? 0 : i]);
  return Tensor::make_result(shape, std::move(out), {a, b}, [=](Node& o) {
    Node& na = *o.inputs[0];
    Node& nb = *o.inputs[1];
    const std::span<double> ga = na.requires_grad ? na.ensure_grad() : std::span<double>{};
    const std::span<double> gb = nb.requires_grad ? nb.ensure_grad() : std::span<double>{};
    for (std::size_t i = 0; i < o.data.size(); ++i) {
      const double g = o.grad[i];
      const double av = na.data[a_scalar ? 0 : i];
      const double bv = nb.data[b_scalar ? 0 : i];
      if (!ga.empty()) ga[a_scalar ? 0 : i] += g * da(av, bv, o.data[i]);
      if (!gb.empty()) gb[b_scalar ? 0 : i] += g * db(av, bv, o.data[i]);
    }
  });
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D d) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [=](Node& o) {
    Node& in = *o.inputs[0];
    auto g = in.ensure_grad();
    for (std::size_t i = 0; i < o.data.size(); ++i) g[i] += o.grad[i] * d(in.data[i], o.data[i]);
  });
}

void require_dim(const Tensor& t, std::size_t d, const char* what) {
  if (t.dim() != d)
    throw ShapeMismatch(std::string(what) + " expects a " + std::to_string(d) + "-D tensor, got " +
                        shape_string(t.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary(x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kClampEps)); },
      [](double v, double) { return v > kClampEps ? 1.0 / v : 0.0; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, [](double v) { return std::sqrt(std::max(v, 0.0)); },
      [](double v, double y) { return v > 0.0 ? 0.5 / y : 0.0; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor pow_scalar(const Tensor& x, double e) {
  return unary(
      x, [e](double v) { return v > 0.0 ? std::pow(v, e) : (e == 0.0 ? 1.0 : 0.0); },
      [e](double v, double) {
        if (v > 0.0) return e * std::pow(v, e - 1.0);
        return e == 1.0 ? 1.0 : 0.0;
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * std::exp(-0.5 * v * v) * inv_sqrt_2pi;
      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make_result({1}, {s}, {x}, [](Node& o) {
    Node& in = *o.inputs[0];
    auto g = in.ensure_grad();
    for (auto& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xd[(o * s.n + j) * s.inner + i];
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [s](Node& o) {
    auto g = o.inputs[0]->ensure_grad();
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t j = 0; j < s.n; ++j)
        for (std::size_t i = 0; i < s.inner; ++i) g[(a * s.n + j) * s.inner + i] += o.grad[a * s.inner + i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_dim(a, 2, "matmul");
  require_dim(b, 2, "matmul");
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  if (b.size(0) != k)
    throw ShapeMismatch("matmul " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  std::vector<double> out(m * n);
  kernels::gemm(false, false, m, n, k, a.data(), b.data(), out, false);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, n, k](Node& o) {
    Node& na = *o.inputs[0];
    Node& nb = *o.inputs[1];
    if (na.requires_grad) kernels::gemm(false, true, m, k, n, o.grad, nb.data, na.ensure_grad(), true);
    if (nb.requires_grad) kernels::gemm(true, false, k, n, m, na.data, o.grad, nb.ensure_grad(), true);
  });
}

Tensor transpose(const Tensor& x) {
  require_dim(x, 2, "transpose");
  const std::size_t r = x.size(0), c = x.size(1);
  const auto xd = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
  return Tensor::make_result({c, r}, std::move(out), {x}, [r, c](Node& o) {
    auto g = o.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_dim(x, 2, "add_row_bias");
  const std::size_t r = x.size(0), c = x.size(1);
  if (bias.numel() != c)
    throw ShapeMismatch("bias of " + std::to_string(bias.numel()) + " for rows of " + std::to_string(c));
  const auto xd = x.data(), bd = bias.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xd[i * c + j] + bd[j];
  return Tensor::make_result({r, c}, std::move(out), {x, bias}, [r, c](Node& o) {
    Node& nx = *o.inputs[0];
    Node& nb = *o.inputs[1];
    if (nx.requires_grad) {
      auto g = nx.ensure_grad();
      for (std::size_t i = 0; i < r * c; ++i) g[i] += o.grad[i];
    }
    if (nb.requires_grad) {
      auto g = nb.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += o.grad[i * c + j];
    }
  });
}

namespace {

Tensor layer_norm_impl(const Tensor& x, const Tensor* gain, const Tensor* bias, double eps) {
  require_dim(x, 2, "layer_norm");
  const std::size_t r = x.size(0), c = x.size(1);
  if (gain && (gain->numel() != c || bias->numel() != c))
    throw ShapeMismatch("layer_norm gain/bias length must be " + std::to_string(c));
  const auto xd = x.data();
  std::vector<double> xhat(r * c), rstd(r), out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xd.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    rstd[i] = var + eps > 0.0 ? 1.0 / std::sqrt(var + eps) : 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * rstd[i];
      out[i * c + j] = gain ? xhat[i * c + j] * gain->data()[j] + bias->data()[j] : xhat[i * c + j];
    }
  }
  std::vector<Tensor> inputs{x};
  if (gain) {
    inputs.push_back(*gain);
    inputs.push_back(*bias);
  }
  const bool affine = gain != nullptr;
  return Tensor::make_result({r, c}, std::move(out), std::move(inputs),
                             [r, c, affine, xhat = std::move(xhat), rstd = std::move(rstd)](Node& o) {
    Node& nx = *o.inputs[0];
    const double* gain_v = affine ? o.inputs[1]->data.data() : nullptr;
    std::vector<double> dxhat(c);
    for (std::size_t i = 0; i < r; ++i) {
      const double* g = o.grad.data() + i * c;
      const double* xh = xhat.data() + i * c;
      if (affine) {
        Node& ng = *o.inputs[1];
        Node& nb = *o.inputs[2];
        if (ng.requires_grad) {
          auto gg = ng.ensure_grad();
          for (std::size_t j = 0; j < c; ++j) gg[j] += g[j] * xh[j];
        }
        if (nb.requires_grad) {
          auto gb = nb.ensure_grad();
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[j];
        }
      }
      if (!nx.requires_grad) continue;
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        dxhat[j] = affine ? g[j] * gain_v[j] : g[j];
        m1 += dxhat[j];
        m2 += dxhat[j] * xh[j];
      }
      m1 /= static_cast<double>(c);
      m2 /= static_cast<double>(c);
      auto gx = nx.ensure_grad();
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += rstd[i] * (dxhat[j] - m1 - xh[j] * m2);
    }
  });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  return layer_norm_impl(x, &gain, &bias, eps);
}

Tensor layer_norm(const Tensor& x, double eps) { return layer_norm_impl(x, nullptr, nullptr, eps); }

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.n; ++j) mx = std::max(mx, xd[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const double e = std::exp(xd[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= z;
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [s](Node& o) {
    auto gx = o.inputs[0]->ensure_grad();
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = a * s.n * s.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.n; ++j) dot += o.grad[base + j * s.inner] * o.data[base + j * s.inner];
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t at = base + j * s.inner;
          gx[at] += o.data[at] * (o.grad[at] - dot);
        }
      }
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  return conv2d(x, w, Tensor(), stride, pad);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  if (x.dim() != 3 && x.dim() != 4)
    throw ShapeMismatch("conv2d input must be CxHxW or BxCxHxW, got " + shape_string(x.shape()));
  require_dim(w, 4, "conv2d weight");
  if (stride == 0) throw InvalidParam("conv2d stride must be >= 1");
  const bool batched = x.dim() == 4;
  const std::size_t batch = batched ? x.size(0) : 1;
  kernels::ConvGeometry g;
  g.channels = x.size(batched ? 1 : 0);
  g.height = x.size(batched ? 2 : 1);
  g.width = x.size(batched ? 3 : 2);
  g.kernel = w.size(2);
  g.stride = stride;
  g.pad = pad;
  const std::size_t co = w.size(0);
  if (w.size(1) != g.channels || w.size(3) != g.kernel)
    throw ShapeMismatch("conv2d weight " + shape_string(w.shape()) + " for input " + shape_string(x.shape()));
  if (g.kernel > g.height + 2 * pad || g.kernel > g.width + 2 * pad)
    throw ShapeMismatch("conv2d kernel larger than padded input");
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != co) throw ShapeMismatch("conv2d bias length must equal output channels");

  const std::size_t in_size = g.channels * g.height * g.width;
  const std::size_t out_size = co * g.out_pixels();
  std::vector<double> out(batch * out_size);
  auto scratch = kernels::scratch_buffer(g.patch_size() * g.out_pixels());
  const auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    kernels::conv2d_forward(g, co, xd.subspan(b * in_size, in_size), w.data(),
                            has_bias ? bias.data() : std::span<const double>{},
                            std::span<double>(out).subspan(b * out_size, out_size), scratch);
  }
  Shape shape = batched ? Shape{batch, co, g.out_height(), g.out_width()}
                        : Shape{co, g.out_height(), g.out_width()};
  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return Tensor::make_result(std::move(shape), std::move(out), std::move(inputs),
                             [g, co, batch, in_size, out_size, has_bias](Node& o) {
    Node& nx = *o.inputs[0];
    Node& nw = *o.inputs[1];
    Node* nb = has_bias ? o.inputs[2].get() : nullptr;
    std::span<double> gw = nw.requires_grad ? nw.ensure_grad() : std::span<double>{};
    std::span<double> gb = (nb && nb->requires_grad) ? nb->ensure_grad() : std::span<double>{};
    std::span<double> gx = nx.requires_grad ? nx.ensure_grad() : std::span<double>{};
    if (gw.empty() && gb.empty() && gx.empty()) return;
    auto scratch = kernels::scratch_buffer(g.patch_size() * g.out_pixels());
    const std::span<const double> xd = nx.data;
    const std::span<const double> go = o.grad;
    for (std::size_t b = 0; b < batch; ++b) {
      kernels::conv2d_backward(g, co, xd.subspan(b * in_size, in_size), nw.data,
                               go.subspan(b * out_size, out_size),
                               gx.empty() ? gx : gx.subspan(b * in_size, in_size), gw, gb, scratch);
    }
  });
}

Tensor max_pool2x2(const Tensor& x) {
  require_dim(x, 4, "max_pool2x2");
  const std::size_t planes = x.size(0) * x.size(1), h = x.size(2), w = x.size(3);
  if (h % 2 || w % 2) throw ShapeMismatch("max_pool2x2 needs even spatial size, got " + shape_string(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  const auto xd = x.data();
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t base = p * h * w + 2 * y * w + 2 * xx;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (std::size_t c : cand)
          if (xd[c] > xd[best]) best = c;
        const std::size_t at = (p * oh + y) * ow + xx;
        out[at] = xd[best];
        arg[at] = best;
      }
    }
  }
  return Tensor::make_result({x.size(0), x.size(1), oh, ow}, std::move(out), {x},
                             [arg = std::move(arg)](Node& o) {
    auto g = o.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += o.grad[i];
  });
}

Tensor upsample_nearest2x(const Tensor& x) {
  require_dim(x, 4, "upsample_nearest2x");
  const std::size_t planes = x.size(0) * x.size(1), h = x.size(2), w = x.size(3);
  const std::size_t oh = 2 * h, ow = 2 * w;
  const auto xd = x.data();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) out[(p * oh + y) * ow + xx] = xd[(p * h + y / 2) * w + xx / 2];
  return Tensor::make_result({x.size(0), x.size(1), oh, ow}, std::move(out), {x},
                             [planes, h, w](Node& o) {
    auto g = o.inputs[0]->ensure_grad();
    const std::size_t oh = 2 * h, ow = 2 * w;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) g[(p * h + y / 2) * w + xx / 2] += o.grad[(p * oh + y) * ow + xx];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeMismatch("concat of zero tensors");
  Shape shape = parts[0].shape();
  const AxisSplit first = split_at(shape, axis);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != shape.size()) throw ShapeMismatch("concat rank mismatch");
    probe[axis] = shape[axis];
    if (probe != shape) throw ShapeMismatch("concat shapes " + shape_string(p.shape()) + " vs " + shape_string(shape));
    widths.push_back(p.size(axis) * first.inner);
    total += p.size(axis);
  }
  shape[axis] = total;
  const std::size_t row = total * first.inner;
  std::vector<double> out(first.outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pd = parts[k].data();
    for (std::size_t o = 0; o < first.outer; ++o)
      std::copy_n(pd.data() + o * widths[k], widths[k], out.data() + o * row + offset);
    offset += widths[k];
  }
  return Tensor::make_result(std::move(shape), std::move(out), parts,
                             [widths, outer = first.outer, row](Node& o) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& in = *o.inputs[k];
      if (in.requires_grad) {
        auto g = in.ensure_grad();
        for (std::size_t a = 0; a < outer; ++a)
          for (std::size_t j = 0; j < widths[k]; ++j) g[a * widths[k] + j] += o.grad[a * row + offset + j];
      }
      offset += widths[k];
    }
  });
}

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (length == 0 || start + length > s.n)
    throw ShapeMismatch("narrow [" + std::to_string(start) + ", +" + std::to_string(length) + ") of " +
                        shape_string(x.shape()));
  Shape shape = x.shape();
  shape[axis] = length;
  const std::size_t src_row = s.n * s.inner, dst_row = length * s.inner, skip = start * s.inner;
  const auto xd = x.data();
  std::vector<double> out(s.outer * dst_row);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xd.data() + o * src_row + skip, dst_row, out.data() + o * dst_row);
  return Tensor::make_result(std::move(shape), std::move(out), {x},
                             [outer = s.outer, src_row, dst_row, skip](Node& o) {
    auto g = o.inputs[0]->ensure_grad();
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t j = 0; j < dst_row; ++j) g[a * src_row + skip + j] += o.grad[a * dst_row + j];
  });
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  Shape shape = x.shape();
  Tensor part = narrow(x, axis, index, 1);
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  return reshape(part, std::move(shape));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeMismatch("reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& o) {
    auto g = o.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel())
    throw ShapeMismatch("cosine_similarity " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const auto ad = a.data(), bd = b.data();
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) {
    dot += ad[i] * bd[i];
    aa += ad[i] * ad[i];
    bb += bd[i] * bd[i];
  }
  constexpr double kMinNorm = 1e-12;
  const bool degenerate = std::sqrt(aa) < kMinNorm || std::sqrt(bb) < kMinNorm;
  // sqrt(|a|^2 |b|^2) rather than |a| |b| so that cos(v, v) is exactly 1.
  const double denom = degenerate ? 0.0 : std::sqrt(aa * bb);
  const double cos = degenerate ? 0.0 : std::clamp(dot / denom, -1.0, 1.0);
  return Tensor::make_result({1}, {cos}, {a, b}, [degenerate, denom, aa, bb](Node& o) {
    if (degenerate) return;
    Node& na = *o.inputs[0];
    Node& nb = *o.inputs[1];
    const double g = o.grad[0];
    const double c = o.data[0];
    // Copies guard against a and b being the same node.
    const std::vector<double> av = na.data, bv = nb.data;
    if (na.requires_grad) {
      auto ga = na.ensure_grad();
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g * (bv[i] / denom - c * av[i] / aa);
    }
    if (nb.requires_grad) {
      auto gb = nb.ensure_grad();
      for (std::size_t i = 0; i < bv.size(); ++i) gb[i] += g * (av[i] / denom - c * bv[i] / bb);
    }
  });
}

}  // namespace shapeseg
