#include "dialect_lab/optim.h"

#include <cmath>

#include "dialect_lab/errors.h"

namespace dialect_lab::nn {

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (!(state.beta1 > 0.0 && state.beta1 < 1.0 && state.beta2 > 0.0 &&
        state.beta2 < 1.0))
    throw InvalidArgument("adam: betas must lie in (0, 1)");
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->tensor.size(), 0.0);
      state.v.emplace_back(p->tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam: parameter count changed between steps");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& tensor = params[p]->tensor;
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != tensor.size())
      throw ShapeError("adam: moment shape mismatch for " + params[p]->name);
    if (!tensor.has_grad()) continue;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double g = tensor.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      tensor.values[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->tensor.zero_grad();
}

}  // namespace dialect_lab::nn
