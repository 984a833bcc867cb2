#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dialect_lab/tensor.h"

namespace dialect_lab::nn {

/// Adam hyperparameters, step counter and per-parameter moment buffers.
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One Adam update with bias correction using each parameter's gradient:
///   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
///   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// Moment buffers are created on the first call; `step` increments once.
void adam_step(std::span<Parameter* const> params, AdamState& state);

/// Clears the gradient buffer of every parameter.
void zero_grad(std::span<Parameter* const> params);

}  // namespace dialect_lab::nn
