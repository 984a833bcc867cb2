#include "dialect_lab/layers.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "dialect_lab/errors.h"

namespace dialect_lab::nn {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

void require_rank(const Tensor& t, std::size_t rank, const char* who) {
  if (t.rank() != rank)
    throw ShapeError(std::string(who) + ": expected rank " +
                     std::to_string(rank) + " input, got " +
                     shape_string(t.dims));
}

}  // namespace

void fill_uniform(std::vector<double>& values, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : values) v = static_cast<double>(static_cast<float>(dist(rng)));
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel_h, std::size_t kernel_w,
               Activation activation)
    : in_ch_(in_channels),
      out_ch_(out_channels),
      kh_(kernel_h),
      kw_(kernel_w),
      activation_(activation) {
  if (in_ch_ == 0 || out_ch_ == 0 || kh_ == 0 || kw_ == 0)
    throw InvalidArgument("Conv2d: channels and kernel size must be positive");
  weight_ = {"weight", Tensor({out_ch_, in_ch_, kh_, kw_})};
  bias_ = {"bias", Tensor({out_ch_})};
}

void Conv2d::initialize(Rng& rng) {
  const double fan_in = static_cast<double>(in_ch_ * kh_ * kw_);
  const double fan_out = static_cast<double>(out_ch_ * kh_ * kw_);
  fill_uniform(weight_.tensor.values, std::sqrt(6.0 / (fan_in + fan_out)), rng);
  std::fill(bias_.tensor.values.begin(), bias_.tensor.values.end(), 0.0);
}

std::vector<std::size_t> Conv2d::output_dims(
    const std::vector<std::size_t>& in) const {
  if (in.size() != 3 || in[0] != in_ch_ || in[1] < kh_ || in[2] < kw_)
    throw ShapeError("Conv2d " + describe() + ": cannot accept input " +
                     shape_string(in));
  return {out_ch_, in[1] - kh_ + 1, in[2] - kw_ + 1};
}

std::string Conv2d::describe() const {
  return "conv " + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) +
         " " + std::to_string(kh_) + "x" + std::to_string(kw_);
}

Tensor Conv2d::forward(const Tensor& input) {
  require_rank(input, 3, "Conv2d");
  const auto od = output_dims(input.dims);
  in_dims_ = input.dims;
  const std::size_t H = input.dims[1], W = input.dims[2];
  const std::size_t Ho = od[1], Wo = od[2];
  const std::size_t K = in_ch_ * kh_ * kw_;
  const std::size_t P = Ho * Wo;

  cols_.assign(K * P, 0.0);
  for (std::size_t c = 0; c < in_ch_; ++c)
    for (std::size_t m = 0; m < kh_; ++m)
      for (std::size_t n = 0; n < kw_; ++n) {
        double* row = &cols_[((c * kh_ + m) * kw_ + n) * P];
        for (std::size_t i = 0; i < Ho; ++i) {
          const double* src = &input.values[(c * H + i + m) * W + n];
          std::copy(src, src + Wo, row + i * Wo);
        }
      }

  Tensor out(od);
  MatrixMap y(out.values.data(), static_cast<Eigen::Index>(out_ch_),
              static_cast<Eigen::Index>(P));
  ConstMatrixMap w(weight_.tensor.values.data(),
                   static_cast<Eigen::Index>(out_ch_),
                   static_cast<Eigen::Index>(K));
  ConstMatrixMap x(cols_.data(), static_cast<Eigen::Index>(K),
                   static_cast<Eigen::Index>(P));
  y.noalias() = w * x;
  for (std::size_t o = 0; o < out_ch_; ++o) {
    double b = bias_.tensor.values[o];
    double* row = &out.values[o * P];
    for (std::size_t p = 0; p < P; ++p) {
      double v = row[p] + b;
      row[p] = activation_ == Activation::kRelu ? std::max(v, 0.0) : v;
    }
  }
  out_ = out.values;
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_output) {
  if (in_dims_.empty()) throw ShapeError("Conv2d::backward before forward");
  const auto od = output_dims(in_dims_);
  if (grad_output.dims != od)
    throw ShapeError("Conv2d::backward: gradient shape mismatch");
  const std::size_t H = in_dims_[1], W = in_dims_[2];
  const std::size_t Ho = od[1], Wo = od[2];
  const std::size_t K = in_ch_ * kh_ * kw_;
  const std::size_t P = Ho * Wo;

  std::vector<double> g = grad_output.values;
  if (activation_ == Activation::kRelu)
    for (std::size_t i = 0; i < g.size(); ++i)
      if (out_[i] <= 0.0) g[i] = 0.0;

  if (!weight_.tensor.has_grad()) weight_.tensor.zero_grad();
  if (!bias_.tensor.has_grad()) bias_.tensor.zero_grad();

  ConstMatrixMap gm(g.data(), static_cast<Eigen::Index>(out_ch_),
                    static_cast<Eigen::Index>(P));
  ConstMatrixMap x(cols_.data(), static_cast<Eigen::Index>(K),
                   static_cast<Eigen::Index>(P));
  MatrixMap dw(weight_.tensor.grad.data(), static_cast<Eigen::Index>(out_ch_),
               static_cast<Eigen::Index>(K));
  dw.noalias() += gm * x.transpose();
  // Explicit loop: Eigen's vectorized reductions over mapped memory depend on
  // the buffer's alignment, which would make training heap-dependent.
  for (std::size_t o = 0; o < out_ch_; ++o) {
    const double* row = &g[o * P];
    double sum = 0.0;
    for (std::size_t p = 0; p < P; ++p) sum += row[p];
    bias_.tensor.grad[o] += sum;
  }

  ConstMatrixMap w(weight_.tensor.values.data(),
                   static_cast<Eigen::Index>(out_ch_),
                   static_cast<Eigen::Index>(K));
  RowMatrix dcols = w.transpose() * gm;

  Tensor dx(in_dims_);
  for (std::size_t c = 0; c < in_ch_; ++c)
    for (std::size_t m = 0; m < kh_; ++m)
      for (std::size_t n = 0; n < kw_; ++n) {
        const double* row = dcols.data() + ((c * kh_ + m) * kw_ + n) * P;
        for (std::size_t i = 0; i < Ho; ++i) {
          double* dst = &dx.values[(c * H + i + m) * W + n];
          const double* src = row + i * Wo;
          for (std::size_t j = 0; j < Wo; ++j) dst[j] += src[j];
        }
      }
  return dx;
}

// ------------------------------------------------------------- MaxPool2d

MaxPool2d::MaxPool2d(std::size_t window_h, std::size_t window_w)
    : wh_(window_h), ww_(window_w) {
  if (wh_ == 0 || ww_ == 0)
    throw InvalidArgument("MaxPool2d: window must be positive");
}

std::vector<std::size_t> MaxPool2d::output_dims(
    const std::vector<std::size_t>& in) const {
  if (in.size() != 3 || in[1] < wh_ || in[2] < ww_)
    throw ShapeError("MaxPool2d " + describe() + ": cannot accept input " +
                     shape_string(in));
  return {in[0], in[1] / wh_, in[2] / ww_};
}

std::string MaxPool2d::describe() const {
  return "maxpool " + std::to_string(wh_) + "x" + std::to_string(ww_);
}

Tensor MaxPool2d::forward(const Tensor& input) {
  require_rank(input, 3, "MaxPool2d");
  const auto od = output_dims(input.dims);
  in_dims_ = input.dims;
  Tensor out(od);
  argmax_.assign(out.size(), 0);
  const std::size_t H = input.dims[1], W = input.dims[2];
  std::size_t idx = 0;
  for (std::size_t c = 0; c < od[0]; ++c)
    for (std::size_t i = 0; i < od[1]; ++i)
      for (std::size_t j = 0; j < od[2]; ++j, ++idx) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_at = 0;
        for (std::size_t m = 0; m < wh_; ++m)
          for (std::size_t n = 0; n < ww_; ++n) {
            std::size_t at = (c * H + i * wh_ + m) * W + j * ww_ + n;
            if (input.values[at] > best) {
              best = input.values[at];
              best_at = at;
            }
          }
        out.values[idx] = best;
        argmax_[idx] = best_at;
      }
  return out;
}

Tensor MaxPool2d::backward(const Tensor& grad_output) {
  if (grad_output.size() != argmax_.size())
    throw ShapeError("MaxPool2d::backward: gradient shape mismatch");
  Tensor dx(in_dims_);
  for (std::size_t i = 0; i < argmax_.size(); ++i)
    dx.values[argmax_[i]] += grad_output.values[i];
  return dx;
}

// --------------------------------------------------------------- Flatten

Tensor Flatten::forward(const Tensor& input) {
  in_dims_ = input.dims;
  return Tensor({input.size()}, input.values);
}

Tensor Flatten::backward(const Tensor& grad_output) {
  return Tensor(in_dims_, grad_output.values);
}

std::vector<std::size_t> Flatten::output_dims(
    const std::vector<std::size_t>& in) const {
  return {Tensor::count(in)};
}

// ----------------------------------------------------------------- Dense

Dense::Dense(std::size_t in_features, std::size_t out_features,
             Activation activation)
    : in_(in_features), out_(out_features), activation_(activation) {
  if (in_ == 0 || out_ == 0)
    throw InvalidArgument("Dense: sizes must be positive");
  weight_ = {"weight", Tensor({out_, in_})};
  bias_ = {"bias", Tensor({out_})};
}

void Dense::initialize(Rng& rng) {
  fill_uniform(weight_.tensor.values,
               std::sqrt(6.0 / static_cast<double>(in_ + out_)), rng);
  std::fill(bias_.tensor.values.begin(), bias_.tensor.values.end(), 0.0);
}

std::vector<std::size_t> Dense::output_dims(
    const std::vector<std::size_t>& in) const {
  if (Tensor::count(in) != in_ || in.size() != 1)
    throw ShapeError("Dense " + describe() + ": cannot accept input " +
                     shape_string(in));
  return {out_};
}

std::string Dense::describe() const {
  return "dense " + std::to_string(in_) + "->" + std::to_string(out_) +
         (activation_ == Activation::kRelu ? " relu" : "");
}

Tensor Dense::forward(const Tensor& input) {
  const auto od = output_dims(input.dims);
  input_ = input.values;
  Tensor out(od);
  ConstMatrixMap w(weight_.tensor.values.data(), static_cast<Eigen::Index>(out_),
                   static_cast<Eigen::Index>(in_));
  ConstVectorMap x(input.values.data(), static_cast<Eigen::Index>(in_));
  ConstVectorMap b(bias_.tensor.values.data(), static_cast<Eigen::Index>(out_));
  VectorMap y(out.values.data(), static_cast<Eigen::Index>(out_));
  y.noalias() = w * x;
  y += b;
  if (activation_ == Activation::kRelu)
    for (double& v : out.values) v = std::max(v, 0.0);
  output_ = out.values;
  return out;
}

Tensor Dense::backward(const Tensor& grad_output) {
  if (grad_output.size() != out_)
    throw ShapeError("Dense::backward: gradient shape mismatch");
  std::vector<double> g = grad_output.values;
  if (activation_ == Activation::kRelu)
    for (std::size_t i = 0; i < out_; ++i)
      if (output_[i] <= 0.0) g[i] = 0.0;
  if (!weight_.tensor.has_grad()) weight_.tensor.zero_grad();
  if (!bias_.tensor.has_grad()) bias_.tensor.zero_grad();

  ConstVectorMap gv(g.data(), static_cast<Eigen::Index>(out_));
  ConstVectorMap x(input_.data(), static_cast<Eigen::Index>(in_));
  MatrixMap dw(weight_.tensor.grad.data(), static_cast<Eigen::Index>(out_),
               static_cast<Eigen::Index>(in_));
  dw.noalias() += gv * x.transpose();
  VectorMap db(bias_.tensor.grad.data(), static_cast<Eigen::Index>(out_));
  db += gv;

  ConstMatrixMap w(weight_.tensor.values.data(), static_cast<Eigen::Index>(out_),
                   static_cast<Eigen::Index>(in_));
  Tensor dx({in_});
  VectorMap dxv(dx.values.data(), static_cast<Eigen::Index>(in_));
  dxv.noalias() = w.transpose() * gv;
  return dx;
}

// ---------------------------------------------------------------- losses

Tensor softmax(const Tensor& logits) {
  if (logits.size() == 0) throw ShapeError("softmax: empty logits");
  Tensor out(logits.dims);
  const double top = *std::max_element(logits.values.begin(), logits.values.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.values[i] = std::exp(logits.values[i] - top);
    sum += out.values[i];
  }
  for (double& v : out.values) v /= sum;
  return out;
}

double cross_entropy(const Tensor& probs, std::size_t label) {
  if (label >= probs.size())
    throw InvalidArgument("cross_entropy: label " + std::to_string(label) +
                          " out of range for " + std::to_string(probs.size()) +
                          " classes");
  return -std::log(std::max(probs.values[label], 1e-12));
}

LossResult softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  LossResult r;
  r.probs = softmax(logits);
  r.loss = cross_entropy(r.probs, label);
  r.grad_logits = r.probs;
  r.grad_logits.values[label] -= 1.0;
  return r;
}

}  // namespace dialect_lab::nn
