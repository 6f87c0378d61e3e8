#pragma once

#include <functional>
#include <vector>

#include "shapeseg/tensor.hpp"

namespace shapeseg {

using ScalarFn = std::function<Tensor(const Tensor&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Compares the reverse-mode gradient of f at x with central differences of
// step h. The per-coordinate error is |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check_detail(const ScalarFn& f, const Tensor& x, double h = 1e-5);

inline double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5) {
  return grad_check_detail(f, x, h).max_rel_error;
}

}  // namespace shapeseg
