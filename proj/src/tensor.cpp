#include "dialect_lab/tensor.h"

#include <cmath>
#include <functional>
#include <numeric>

#include "dialect_lab/errors.h"

namespace dialect_lab::nn {

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : dims(std::move(shape)), values(count(dims), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : dims(std::move(shape)), values(std::move(data)) {
  if (values.size() != count(dims))
    throw ShapeError("Tensor: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_string(dims));
}

std::size_t Tensor::count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

bool Tensor::finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string shape_string(const std::vector<std::size_t>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

}  // namespace dialect_lab::nn
