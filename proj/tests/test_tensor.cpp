#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "shapeseg/error.hpp"
#include "shapeseg/gradcheck.hpp"
#include "shapeseg/kernels.hpp"
#include "shapeseg/ops.hpp"
#include "shapeseg/optim.hpp"
#include "shapeseg/rng.hpp"
#include "shapeseg/tensor.hpp"

using namespace shapeseg;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = false, double lo = -1.0, double hi = 1.0) {
  SplitMix64 rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul of two 2x2 matrices") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  CHECK(values(matmul(a, b)) == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul by the identity returns the input") {
  Tensor a = random_tensor({5, 3}, 11);
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(values(matmul(a, eye)) == values(a));
}

TEST_CASE("matmul rejects inner dimension mismatch") {
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeMismatch);
}

TEST_CASE("elementwise ops only broadcast single elements") {
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeMismatch);
  Tensor s = add(Tensor::from({2}, {1, 2}), Tensor::scalar(10));
  CHECK(values(s) == std::vector<double>{11, 12});
}

TEST_CASE("conv2d window sums") {
  Tensor x = Tensor::full({1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 2, 2}, 1.0);
  Tensor y = conv2d(x, w, 1, 0);
  CHECK(y.shape() == Shape{1, 2, 2});
  CHECK(values(y) == std::vector<double>{4, 4, 4, 4});
}

TEST_CASE("conv2d identity kernel") {
  Tensor x = random_tensor({1, 4, 5}, 3);
  Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
  CHECK(values(conv2d(x, w, 1, 0)) == values(x));
}

TEST_CASE("conv2d stride 2 output shape") {
  Tensor y = conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 2, 2}), 2, 0);
  CHECK(y.shape() == Shape{1, 2, 2});
}

TEST_CASE("softmax values") {
  Tensor h = softmax(Tensor::from({2}, {0, 0}), 0);
  CHECK(h[0] == 0.5);
  CHECK(h[1] == 0.5);
  Tensor s = softmax(Tensor::from({3}, {1, 2, 3}), 0);
  CHECK(s[0] == doctest::Approx(0.09003057).epsilon(1e-8));
  CHECK(s[1] == doctest::Approx(0.24472847).epsilon(1e-8));
  CHECK(s[2] == doctest::Approx(0.66524096).epsilon(1e-8));
}

TEST_CASE("softmax is shift invariant") {
  Tensor x = random_tensor({3, 4}, 5, false, -3, 3);
  Tensor a = softmax(x, 1);
  Tensor b = softmax(add_scalar(x, 17.25), 1);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("layer norm of [1,2,3]") {
  Tensor y = layer_norm(Tensor::from({1, 3}, {1, 2, 3}), Tensor::full({3}, 1.0), Tensor::zeros({3}), 0.0);
  CHECK(y[0] == doctest::Approx(-1.22474487).epsilon(1e-9));
  CHECK(std::fabs(y[1]) < 1e-15);
  CHECK(y[2] == doctest::Approx(1.22474487).epsilon(1e-9));
}

TEST_CASE("layer norm of a constant row is the bias") {
  Tensor bias = Tensor::from({4}, {0.5, -1, 2, 0});
  Tensor y = layer_norm(Tensor::full({2, 4}, 3.0), Tensor::full({4}, 2.0), bias, 1e-5);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(y[r * 4 + c] == bias[c]);
}

TEST_CASE("layer norm row mean equals the bias") {
  Tensor y = layer_norm(random_tensor({3, 8}, 9), Tensor::full({8}, 1.0), Tensor::full({8}, 0.25), 1e-5);
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0;
    for (std::size_t c = 0; c < 8; ++c) m += y[r * 8 + c];
    CHECK(std::fabs(m / 8 - 0.25) < 1e-12);
  }
}

TEST_CASE("backward of a sum of squares") {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  sum(mul(x, x)).backward();
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, 4, 6});
}

TEST_CASE("relu passes no gradient below zero") {
  Tensor x = Tensor::from({2}, {-1, 2}, true);
  sum(relu(x)).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("backward requires a scalar") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(mul(x, x).backward(), NotScalar);
}

TEST_CASE("leaf gradients accumulate until zero_grad") {
  Tensor x = Tensor::from({1}, {3}, true);
  sum(mul(x, x)).backward();
  sum(mul(x, x)).backward();
  CHECK(x.grad()[0] == 12.0);
  x.zero_grad();
  sum(x).backward();
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("matmul gradients agree with finite differences") {
  Tensor b = random_tensor({3, 3}, 21);
  Tensor a = random_tensor({3, 3}, 22, true);
  CHECK(grad_check([&](const Tensor& x) { return sum(mul(matmul(x, b), matmul(x, b))); }, a) < 1e-6);
  Tensor c = random_tensor({3, 3}, 23, true);
  CHECK(grad_check([&](const Tensor& x) { return sum(exp(matmul(b, x))); }, c) < 1e-6);
}

TEST_CASE("grad_check of analytic cases") {
  Tensor x = random_tensor({4}, 30, true);
  CHECK(grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x) < 1e-8);
  GradCheckResult r = grad_check_detail([](const Tensor&) { return Tensor::scalar(4.0); }, x);
  CHECK(r.max_rel_error == 0.0);
  for (double g : r.analytic) CHECK(g == 0.0);
  for (double g : r.numeric) CHECK(g == 0.0);
}

TEST_CASE("op gradients on small random inputs") {
  Tensor x = random_tensor({2, 4}, 40, true, 0.1, 0.9);
  Tensor y = random_tensor({2, 4}, 41, false, 0.5, 1.5);
  const double tol = 1e-6;
  CHECK(grad_check([&](const Tensor& t) { return sum(div(y, add_scalar(t, 1.0))); }, x) < tol);
  CHECK(grad_check([&](const Tensor& t) { return sum(log(t)); }, x) < tol);
  CHECK(grad_check([&](const Tensor& t) { return sum(sqrt(t)); }, x) < tol);
  CHECK(grad_check([&](const Tensor& t) { return sum(pow_scalar(t, 1.7)); }, x) < tol);
  CHECK(grad_check([&](const Tensor& t) { return sum(gelu(t)); }, x) < tol);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(softmax(t, 1), y)); }, x) < tol);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(transpose(t), transpose(y))); }, x) < tol);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(sum_axis(t, 0), sum_axis(y, 0))); }, x) < tol);
  CHECK(grad_check([&](const Tensor& t) { return cosine_similarity(t, y); }, x) < tol);
  Tensor g = random_tensor({4}, 42, false, 0.5, 1.5);
  Tensor b = random_tensor({4}, 43);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(layer_norm(t, g, b, 1e-5), y)); }, x) < tol);
}

TEST_CASE("conv, pool and upsample gradients") {
  Tensor x = random_tensor({1, 2, 6, 6}, 50, true);
  Tensor w = random_tensor({3, 2, 3, 3}, 51);
  Tensor bias = random_tensor({3}, 52);
  Tensor probe = random_tensor({1, 3, 6, 6}, 53);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(conv2d(t, w, bias, 1, 1), probe)); }, x) < 1e-6);
  Tensor wg = random_tensor({3, 2, 3, 3}, 54, true);
  Tensor xc = x.detach();
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(conv2d(xc, t, bias, 1, 1), probe)); }, wg) < 1e-6);
  Tensor pprobe = random_tensor({1, 2, 3, 3}, 55);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(max_pool2x2(t), pprobe)); }, x) < 1e-6);
  Tensor uprobe = random_tensor({1, 2, 12, 12}, 56);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(upsample_nearest2x(t), uprobe)); }, x) < 1e-6);
}

TEST_CASE("identical op sequences give identical bits") {
  auto run = [] {
    Tensor x = random_tensor({4, 6}, 60, true);
    Tensor w = random_tensor({6, 5}, 61);
    Tensor loss = mean(gelu(matmul(x, w)));
    loss.backward();
    return std::make_pair(loss.item(), values(Tensor::from({24}, {x.grad().begin(), x.grad().end()})));
  };
  CHECK(run() == run());
}

TEST_CASE("log clamps instead of producing infinities") {
  Tensor y = log(Tensor::from({2}, {0.0, -1.0}));
  CHECK(std::isfinite(y[0]));
  CHECK(y[0] == doctest::Approx(std::log(kClampEps)));
}

}  // TEST_SUITE

TEST_SUITE("optim") {

TEST_CASE("sgd step") {
  Tensor p = Tensor::from({1}, {1.0}, true);
  p.mutable_grad()[0] = 2.0;
  OptimState s;
  s.kind = OptimKind::sgd;
  s.learning_rate = 0.1;
  optimizer_step(s, {p});
  CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("adam first step") {
  Tensor p = Tensor::from({1}, {0.0}, true);
  p.mutable_grad()[0] = 1.0;
  OptimState s;
  optimizer_step(s, {p});
  CHECK(p[0] == doctest::Approx(-9.99999990e-4).epsilon(1e-8));
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  for (OptimKind kind : {OptimKind::sgd, OptimKind::adam}) {
    Tensor p = Tensor::from({2}, {0.5, -0.25}, true);
    p.mutable_grad();
    OptimState s;
    s.kind = kind;
    optimizer_step(s, {p});
    CHECK(p[0] == 0.5);
    CHECK(p[1] == -0.25);
  }
}

TEST_CASE("missing gradient buffer is an error") {
  Tensor p = Tensor::from({1}, {1.0}, true);
  OptimState s;
  CHECK_THROWS_AS(optimizer_step(s, {p}), MissingGrad);
}

}  // TEST_SUITE

TEST_SUITE("kernels") {

TEST_CASE("blocked gemm matches the reference in every transpose mode") {
  for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {7, 13, 5}, {33, 17, 29}, {64, 72, 40}}) {
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        Tensor a = random_tensor({m * k}, 70 + m);
        Tensor b = random_tensor({k * n}, 80 + n);
        std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
        kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), c1, true);
        kernels::reference::gemm(ta, tb, m, n, k, a.data(), b.data(), c2, true);
        for (std::size_t i = 0; i < c1.size(); ++i) CHECK(std::fabs(c1[i] - c2[i]) < 1e-12);
      }
  }
}

TEST_CASE("im2col convolution matches the direct loop") {
  kernels::ConvGeometry g{3, 9, 7, 3, 2, 1};
  const std::size_t co = 4;
  Tensor img = random_tensor({g.channels * g.height * g.width}, 90);
  Tensor w = random_tensor({co * g.patch_size()}, 91);
  Tensor b = random_tensor({co}, 92);
  std::vector<double> out1(co * g.out_pixels()), out2(co * g.out_pixels());
  std::vector<double> scratch(g.patch_size() * g.out_pixels());
  kernels::conv2d_forward(g, co, img.data(), w.data(), b.data(), out1, scratch);
  kernels::reference::conv2d_forward(g, co, img.data(), w.data(), b.data(), out2);
  for (std::size_t i = 0; i < out1.size(); ++i) CHECK(std::fabs(out1[i] - out2[i]) < 1e-12);
}

TEST_CASE("col2im is the adjoint of im2col") {
  kernels::ConvGeometry g{2, 6, 5, 3, 1, 1};
  Tensor x = random_tensor({g.channels * g.height * g.width}, 93);
  Tensor y = random_tensor({g.patch_size() * g.out_pixels()}, 94);
  std::vector<double> cols(y.numel()), back(x.numel(), 0.0);
  kernels::im2col(g, x.data(), cols);
  kernels::col2im_add(g, y.data(), back);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cols.size(); ++i) lhs += cols[i] * y[i];
  for (std::size_t i = 0; i < back.size(); ++i) rhs += x[i] * back[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

}  // TEST_SUITE
