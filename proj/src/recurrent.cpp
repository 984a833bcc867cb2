#include "dialect_lab/recurrent.h"

#include <Eigen/Dense>
#include <cmath>

#include "dialect_lab/errors.h"
#include "dialect_lab/layers.h"

namespace dialect_lab::nn {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.values.data(), static_cast<Eigen::Index>(t.dims[0]),
                        static_cast<Eigen::Index>(t.dims[1]));
}

MatrixMap as_grad_matrix(Tensor& t) {
  if (!t.has_grad()) t.zero_grad();
  return MatrixMap(t.grad.data(), static_cast<Eigen::Index>(t.dims[0]),
                   static_cast<Eigen::Index>(t.dims[1]));
}

VectorMap as_grad_vector(Tensor& t) {
  if (!t.has_grad()) t.zero_grad();
  return VectorMap(t.grad.data(), static_cast<Eigen::Index>(t.size()));
}

ConstVectorMap as_vector(const std::vector<double>& v) {
  return ConstVectorMap(v.data(), static_cast<Eigen::Index>(v.size()));
}

using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;

// Both activations go through exp(), which Eigen vectorizes for double
// (std::tanh has no SIMD path). Saturates correctly: exp overflow gives
// 0 / +-1.
template <typename E>
auto sigmoid(const Eigen::ArrayBase<E>& z) {
  return 1.0 / (1.0 + (-z).exp());
}

template <typename E>
auto tanh_(const Eigen::ArrayBase<E>& z) {
  return 1.0 - 2.0 / (1.0 + (2.0 * z).exp());
}

ConstArrayMap as_array(const std::vector<double>& v) {
  return ConstArrayMap(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Activations are evaluated into Eigen-owned (aligned) arrays and copied
// out. Writing them straight into a std::vector would let the heap address
// decide which elements take the scalar exp() path instead of the packet
// one, and the two can differ in the last bit.
void store(const Eigen::ArrayXd& a, std::vector<double>& out) {
  out.assign(a.data(), a.data() + a.size());
}

}  // namespace

std::string to_string(CellKind kind) {
  return kind == CellKind::kLstm ? "lstm" : "simple";
}

CellKind parse_cell_kind(const std::string& text) {
  if (text == "lstm") return CellKind::kLstm;
  if (text == "simple") return CellKind::kSimple;
  throw InvalidArgument("unknown cell kind '" + text +
                        "' (expected simple or lstm)");
}

RecurrentLayer::RecurrentLayer(CellKind kind, std::size_t input_dim,
                               std::size_t hidden, std::size_t output_dim)
    : kind_(kind), in_(input_dim), hidden_(hidden), out_(output_dim) {
  if (in_ == 0 || hidden_ == 0 || out_ == 0)
    throw InvalidArgument("RecurrentLayer: sizes must be positive");
  w_x_ = {"w_x", Tensor({gate_rows(), in_})};
  w_h_ = {"w_h", Tensor({gate_rows(), hidden_})};
  b_ = {"b", Tensor({gate_rows()})};
  w_y_ = {"w_y", Tensor({out_, hidden_})};
  b_y_ = {"b_y", Tensor({out_})};
}

void RecurrentLayer::initialize(Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden_));
  fill_uniform(w_x_.tensor.values, limit, rng);
  fill_uniform(w_h_.tensor.values, limit, rng);
  fill_uniform(w_y_.tensor.values, limit, rng);
  std::fill(b_.tensor.values.begin(), b_.tensor.values.end(), 0.0);
  std::fill(b_y_.tensor.values.begin(), b_y_.tensor.values.end(), 0.0);
  if (kind_ == CellKind::kLstm)
    for (std::size_t j = hidden_; j < 2 * hidden_; ++j) b_.tensor.values[j] = 1.0;
}

std::vector<Parameter*> RecurrentLayer::parameters() {
  return {&w_x_, &w_h_, &b_, &w_y_, &b_y_};
}

CellState RecurrentLayer::cell_forward(const std::vector<double>& x,
                                       const std::vector<double>& h_prev,
                                       const std::vector<double>& c_prev) const {
  if (x.size() != in_ || h_prev.size() != hidden_)
    throw ShapeError("RecurrentLayer::cell_forward: expected x of " +
                     std::to_string(in_) + " and h of " +
                     std::to_string(hidden_) + " values");
  if (kind_ == CellKind::kLstm && c_prev.size() != hidden_)
    throw ShapeError("RecurrentLayer::cell_forward: LSTM needs c_prev");

  Eigen::VectorXd z = as_matrix(w_x_.tensor) * as_vector(x) +
                      as_matrix(w_h_.tensor) * as_vector(h_prev) +
                      as_vector(b_.tensor.values);
  CellState s;
  const auto H = static_cast<Eigen::Index>(hidden_);
  const Eigen::ArrayXd za = z.array();
  if (kind_ == CellKind::kSimple) {
    store(tanh_(za), s.h);
  } else {
    const Eigen::ArrayXd i = sigmoid(za.segment(0, H));
    const Eigen::ArrayXd f = sigmoid(za.segment(H, H));
    const Eigen::ArrayXd g = tanh_(za.segment(2 * H, H));
    const Eigen::ArrayXd o = sigmoid(za.segment(3 * H, H));
    const Eigen::ArrayXd c = f * as_array(c_prev) + i * g;
    store(c, s.c);
    store(o * tanh_(c), s.h);
  }
  Eigen::VectorXd y = as_matrix(w_y_.tensor) * as_vector(s.h) +
                      as_vector(b_y_.tensor.values);
  s.y.assign(y.data(), y.data() + y.size());
  return s;
}

Tensor RecurrentLayer::forward(const Tensor& sequence) {
  if (sequence.rank() != 2 || sequence.dims[1] != in_ || sequence.dims[0] == 0)
    throw ShapeError("RecurrentLayer: expected (T x " + std::to_string(in_) +
                     ") input, got " + shape_string(sequence.dims));
  const std::size_t T = sequence.dims[0];
  const auto H = static_cast<Eigen::Index>(hidden_);
  const auto G = static_cast<Eigen::Index>(gate_rows());
  inputs_ = sequence.values;
  h_.assign(T + 1, std::vector<double>(hidden_, 0.0));
  c_.assign(T + 1, std::vector<double>(hidden_, 0.0));
  act_.assign(T, std::vector<double>(gate_rows(), 0.0));

  const ConstMatrixMap wx = as_matrix(w_x_.tensor);
  const ConstMatrixMap wh = as_matrix(w_h_.tensor);
  const ConstVectorMap bias = as_vector(b_.tensor.values);
  // Input projections for every step at once: (G x T).
  ConstMatrixMap xs(inputs_.data(), static_cast<Eigen::Index>(T),
                    static_cast<Eigen::Index>(in_));
  RowMatrix xproj = wx * xs.transpose();

  Eigen::VectorXd z(G);
  Eigen::ArrayXd a(G), c(H);
  for (std::size_t t = 0; t < T; ++t) {
    z.noalias() = xproj.col(static_cast<Eigen::Index>(t)) + bias;
    z.noalias() += wh * as_vector(h_[t]);
    const auto za = z.array();
    if (kind_ == CellKind::kSimple) {
      a = tanh_(za);
      store(a, h_[t + 1]);
    } else {
      a.head(2 * H) = sigmoid(za.head(2 * H));
      a.segment(2 * H, H) = tanh_(za.segment(2 * H, H));
      a.tail(H) = sigmoid(za.tail(H));
      c = a.segment(H, H) * as_array(c_[t]) + a.head(H) * a.segment(2 * H, H);
      store(c, c_[t + 1]);
      store(a.tail(H) * tanh_(c), h_[t + 1]);
    }
    store(a, act_[t]);
  }

  Tensor out({out_});
  VectorMap y(out.values.data(), static_cast<Eigen::Index>(out_));
  y.noalias() = as_matrix(w_y_.tensor) * as_vector(h_[T]);
  y += as_vector(b_y_.tensor.values);
  return out;
}

Tensor RecurrentLayer::backward(const Tensor& grad_output) {
  if (grad_output.size() != out_ || h_.empty())
    throw ShapeError("RecurrentLayer::backward: gradient shape mismatch");
  const std::size_t T = h_.size() - 1;
  const auto H = static_cast<Eigen::Index>(hidden_);
  const auto G = static_cast<Eigen::Index>(gate_rows());

  ConstVectorMap gy(grad_output.values.data(), static_cast<Eigen::Index>(out_));
  as_grad_matrix(w_y_.tensor).noalias() += gy * as_vector(h_[T]).transpose();
  as_grad_vector(b_y_.tensor) += gy;

  Eigen::VectorXd dh = as_matrix(w_y_.tensor).transpose() * gy;
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(H);
  // Pre-activation gradients for every step, (T x G); the weight gradients
  // are then two matrix products instead of T outer products.
  RowMatrix dz_all(static_cast<Eigen::Index>(T), G);
  const ConstMatrixMap wh = as_matrix(w_h_.tensor);

  for (std::size_t t = T; t-- > 0;) {
    const ConstArrayMap a = as_array(act_[t]);
    auto dz = dz_all.row(static_cast<Eigen::Index>(t));
    if (kind_ == CellKind::kSimple) {
      dz = (dh.array() * (1.0 - a * a)).matrix().transpose();
    } else {
      const auto i = a.head(H), f = a.segment(H, H), g = a.segment(2 * H, H), o = a.tail(H);
      const Eigen::ArrayXd tc = tanh_(as_array(c_[t + 1]));
      const Eigen::ArrayXd d_c = dc.array() + dh.array() * o * (1.0 - tc * tc);
      dz.segment(0, H) = (d_c * g * i * (1.0 - i)).matrix().transpose();
      dz.segment(H, H) = (d_c * as_array(c_[t]) * f * (1.0 - f)).matrix().transpose();
      dz.segment(2 * H, H) = (d_c * i * (1.0 - g * g)).matrix().transpose();
      dz.segment(3 * H, H) = (dh.array() * tc * o * (1.0 - o)).matrix().transpose();
      dc = (d_c * f).matrix();
    }
    dh.noalias() = wh.transpose() * dz.transpose();
  }

  ConstMatrixMap xs(inputs_.data(), static_cast<Eigen::Index>(T),
                    static_cast<Eigen::Index>(in_));
  RowMatrix hs(static_cast<Eigen::Index>(T), H);
  for (std::size_t t = 0; t < T; ++t)
    hs.row(static_cast<Eigen::Index>(t)) = as_vector(h_[t]).transpose();

  as_grad_matrix(w_x_.tensor).noalias() += dz_all.transpose() * xs;
  as_grad_matrix(w_h_.tensor).noalias() += dz_all.transpose() * hs;
  VectorMap db = as_grad_vector(b_.tensor);
  for (Eigen::Index t = 0; t < dz_all.rows(); ++t) db += dz_all.row(t).transpose();

  Tensor dx({T, in_});
  MatrixMap dxm(dx.values.data(), static_cast<Eigen::Index>(T),
                static_cast<Eigen::Index>(in_));
  dxm.noalias() = dz_all * as_matrix(w_x_.tensor);
  return dx;
}

}  // namespace dialect_lab::nn
