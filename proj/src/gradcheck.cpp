#include "shapeseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace shapeseg {

GradCheckResult grad_check_detail(const ScalarFn& f, const Tensor& x, double h) {
  GradCheckResult r;
  Tensor probe = x.clone(true);
  f(probe).backward();
  const std::size_t n = x.numel();
  r.analytic.assign(n, 0.0);
  if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), r.analytic.begin());

  r.numeric.resize(n);
  std::vector<double> base(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double fp = f(Tensor::from(x.shape(), std::move(plus))).item();
    const double fm = f(Tensor::from(x.shape(), std::move(minus))).item();
    r.numeric[i] = (fp - fm) / (2.0 * h);
    const double err = std::fabs(r.analytic[i] - r.numeric[i]) / std::max(1.0, std::fabs(r.numeric[i]));
    r.max_rel_error = std::max(r.max_rel_error, err);
  }
  return r;
}

}  // namespace shapeseg
