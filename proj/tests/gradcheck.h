#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dialect_lab/layers.h"

namespace gradcheck {

using dialect_lab::nn::Parameter;
using dialect_lab::nn::Tensor;

inline Tensor random_tensor(std::vector<std::size_t> dims, std::uint64_t seed, double sd = 1.0) {
  Tensor t(std::move(dims));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  for (double& v : t.values) v = n(rng);
  return t;
}

inline bool grad_close(double analytic, double numeric) {
  return std::abs(analytic - numeric) <= 1e-4 * std::max(std::abs(analytic), std::abs(numeric)) + 1e-6;
}

// Checks every input and parameter gradient of `forward` (followed by a
// fixed random projection of the output) against central differences.
// Returns the number of mismatches.
inline int check_gradients(const std::function<Tensor(const Tensor&)>& forward,
                    const std::function<Tensor(const Tensor&)>& backward,
                    const std::vector<Parameter*>& params, Tensor input,
                    std::uint64_t seed) {
  const Tensor probe_out = forward(input);
  const Tensor r = random_tensor(probe_out.dims, seed + 1000);
  auto loss = [&](const Tensor& x) {
    const Tensor y = forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };

  for (Parameter* p : params) p->tensor.zero_grad();
  forward(input);
  const Tensor dx = backward(r);

  int bad = 0;
  const double eps = 1e-4;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double keep = input[i];
    input[i] = keep + eps;
    const double up = loss(input);
    input[i] = keep - eps;
    const double down = loss(input);
    input[i] = keep;
    if (!grad_close(dx[i], (up - down) / (2 * eps))) ++bad;
  }
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->tensor.size(); ++i) {
      const double keep = p->tensor[i];
      p->tensor[i] = keep + eps;
      const double up = loss(input);
      p->tensor[i] = keep - eps;
      const double down = loss(input);
      p->tensor[i] = keep;
      if (!grad_close(p->tensor.grad[i], (up - down) / (2 * eps))) ++bad;
    }
  }
  return bad;
}

template <typename L>
int check_layer(L& layer, Tensor input, std::uint64_t seed) {
  return check_gradients([&](const Tensor& x) { return layer.forward(x); },
                         [&](const Tensor& g) { return layer.backward(g); },
                         layer.parameters(), std::move(input), seed);
}

}  // namespace gradcheck
