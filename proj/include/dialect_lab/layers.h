#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "dialect_lab/rng.h"
#include "dialect_lab/tensor.h"

namespace dialect_lab::nn {

enum class Activation { kNone, kRelu };

/// A differentiable stage. forward() caches what backward() needs, so a
/// layer instance serves one sample at a time. backward() accumulates into
/// the parameter gradients and returns the gradient w.r.t. the input.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& input) = 0;
  virtual Tensor backward(const Tensor& grad_output) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::vector<std::size_t> output_dims(
      const std::vector<std::size_t>& input_dims) const = 0;
  virtual std::string describe() const = 0;
};

/// Valid (unpadded), stride-1 2D convolution over (in_ch x H x W) input,
/// followed by an optional ReLU:
///   out[o][i][j] = f(sum_c sum_m sum_n w[o][c][m][n] x[c][i+m][j+n] + b[o]).
class Conv2d : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel_h, std::size_t kernel_w,
         Activation activation = Activation::kRelu);

  /// Glorot-uniform weights, zero bias.
  void initialize(Rng& rng);

  Tensor forward(const Tensor& input) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::vector<std::size_t> output_dims(
      const std::vector<std::size_t>& input_dims) const override;
  std::string describe() const override;

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t in_ch_, out_ch_, kh_, kw_;
  Activation activation_;
  Parameter weight_;  // (out_ch x in_ch x kh x kw)
  Parameter bias_;    // (out_ch)
  std::vector<std::size_t> in_dims_;
  std::vector<double> cols_;  // im2col of the last input
  std::vector<double> out_;   // post-activation output
};

/// Non-overlapping max pooling; trailing rows/cols that do not fill a
/// window are dropped.
class MaxPool2d : public Layer {
 public:
  MaxPool2d(std::size_t window_h, std::size_t window_w);

  Tensor forward(const Tensor& input) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<std::size_t> output_dims(
      const std::vector<std::size_t>& input_dims) const override;
  std::string describe() const override;

 private:
  std::size_t wh_, ww_;
  std::vector<std::size_t> in_dims_;
  std::vector<std::size_t> argmax_;
};

class Flatten : public Layer {
 public:
  Tensor forward(const Tensor& input) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<std::size_t> output_dims(
      const std::vector<std::size_t>& input_dims) const override;
  std::string describe() const override { return "flatten"; }

 private:
  std::vector<std::size_t> in_dims_;
};

/// y = f(W x + b) with W (out x in).
class Dense : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features,
        Activation activation = Activation::kNone);

  void initialize(Rng& rng);

  Tensor forward(const Tensor& input) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::vector<std::size_t> output_dims(
      const std::vector<std::size_t>& input_dims) const override;
  std::string describe() const override;

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Activation activation_;
  Parameter weight_;
  Parameter bias_;
  std::vector<double> input_;
  std::vector<double> output_;
};

/// exp(z - max z) / sum.
Tensor softmax(const Tensor& logits);

/// -log(max(probs[label], 1e-12)). Throws InvalidArgument for a bad label.
double cross_entropy(const Tensor& probs, std::size_t label);

/// Fused softmax + cross-entropy on logits.
struct LossResult {
  double loss = 0.0;
  Tensor probs;
  Tensor grad_logits;  // probs - onehot(label)
};
LossResult softmax_cross_entropy(const Tensor& logits, std::size_t label);

/// Uniform in +-limit, rounded to float precision so checkpoints (32-bit)
/// reproduce freshly initialized models exactly.
void fill_uniform(std::vector<double>& values, double limit, Rng& rng);

}  // namespace dialect_lab::nn
