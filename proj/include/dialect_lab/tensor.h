#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dialect_lab::nn {

/// Dense row-major n-dimensional array with an optional gradient buffer.
struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> values;
  std::vector<double> grad;  // empty, or same size as values

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static std::size_t count(const std::vector<std::size_t>& shape);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return dims.size(); }
  std::size_t dim(std::size_t i) const { return dims.at(i); }
  bool has_grad() const { return !grad.empty(); }

  /// Allocates (or clears) the gradient buffer.
  void zero_grad() { grad.assign(values.size(), 0.0); }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  /// 3D accessor for (channel, row, col) layouts.
  double& at(std::size_t c, std::size_t i, std::size_t j) {
    return values[(c * dims[1] + i) * dims[2] + j];
  }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return values[(c * dims[1] + i) * dims[2] + j];
  }

  /// True when every value is finite.
  bool finite() const;
};

std::string shape_string(const std::vector<std::size_t>& dims);

/// A trainable tensor with a stable name used in checkpoints.
struct Parameter {
  std::string name;
  Tensor tensor;
};

}  // namespace dialect_lab::nn
