#include "shapeseg/optim.hpp"

#include <cmath>

#include "shapeseg/error.hpp"

namespace shapeseg {

void optimizer_step(OptimState& state, const std::vector<Tensor>& params) {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i].has_grad()) throw MissingGrad("parameter " + std::to_string(i) + " has no gradient");
  if (!(state.learning_rate > 0.0)) throw InvalidParam("learning rate must be positive");

  state.step += 1;
  if (state.kind == OptimKind::sgd) {
    for (auto p : params) {
      auto g = p.grad();
      auto d = p.mutable_data();
      for (std::size_t j = 0; j < d.size(); ++j) d[j] -= state.learning_rate * g[j];
    }
    return;
  }

  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeMismatch("optimizer state tracks a different parameter list");
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = p.grad();
    auto d = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != d.size()) throw ShapeMismatch("optimizer moment size differs from parameter " + std::to_string(i));
    for (std::size_t j = 0; j < d.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      d[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void zero_grads(const std::vector<Tensor>& params) {
  for (auto p : params) p.zero_grad();
}

}  // namespace shapeseg
