#pragma once

#include <cstdint>
#include <vector>

#include "shapeseg/tensor.hpp"

namespace shapeseg {

enum class OptimKind { sgd, adam };

struct OptimState {
  OptimKind kind = OptimKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  // Adam moments, one array per parameter, allocated on the first step.
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// SGD: theta -= lr * g. Adam: bias-corrected moments,
// theta -= lr * m_hat / (sqrt(v_hat) + eps). Throws MissingGrad when a
// parameter has no gradient buffer.
void optimizer_step(OptimState& state, const std::vector<Tensor>& params);

void zero_grads(const std::vector<Tensor>& params);

}  // namespace shapeseg
