#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dialect_lab/rng.h"
#include "dialect_lab/tensor.h"

namespace dialect_lab::nn {

enum class CellKind { kSimple, kLstm };

std::string to_string(CellKind kind);
CellKind parse_cell_kind(const std::string& text);

/// One recurrent step. For the simple cell `c` is unused (empty).
struct CellState {
  std::vector<double> h;
  std::vector<double> c;
  std::vector<double> y;  // W_hy h + b_y
};

/// Single recurrent layer over a (T x input_dim) sequence with an output
/// projection read from the final hidden state.
///
/// Simple cell:  h_t = tanh(W_xh x_t + W_hh h_{t-1} + b_h),  y_t = W_hy h_t + b_y
/// LSTM cell:    gates [i, f, g, o] = W_x x_t + W_h h_{t-1} + b
///               c_t = sigmoid(f) c_{t-1} + sigmoid(i) tanh(g)
///               h_t = sigmoid(o) tanh(c_t)
/// Gate blocks are stacked in the order input, forget, cell, output.
///
/// backward() runs full backpropagation through time.
class RecurrentLayer {
 public:
  RecurrentLayer(CellKind kind, std::size_t input_dim, std::size_t hidden,
                 std::size_t output_dim);

  /// Uniform +-1/sqrt(hidden) for every matrix; zero biases except the LSTM
  /// forget gate, which starts at 1.
  void initialize(Rng& rng);

  CellKind kind() const { return kind_; }
  std::size_t input_dim() const { return in_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t output_dim() const { return out_; }

  /// One step from (h_prev, c_prev). c_prev is ignored for the simple cell.
  CellState cell_forward(const std::vector<double>& x,
                         const std::vector<double>& h_prev,
                         const std::vector<double>& c_prev = {}) const;

  /// Runs the sequence from zero state; returns y_T (output_dim).
  Tensor forward(const Tensor& sequence);
  /// Gradient w.r.t. the input sequence; accumulates parameter gradients.
  Tensor backward(const Tensor& grad_output);

  std::vector<Parameter*> parameters();

  Parameter& w_x() { return w_x_; }
  Parameter& w_h() { return w_h_; }
  Parameter& b() { return b_; }
  Parameter& w_y() { return w_y_; }
  Parameter& b_y() { return b_y_; }

 private:
  std::size_t gate_rows() const { return kind_ == CellKind::kLstm ? 4 * hidden_ : hidden_; }

  CellKind kind_;
  std::size_t in_, hidden_, out_;
  Parameter w_x_;  // (gate_rows x in)      W_xh for the simple cell
  Parameter w_h_;  // (gate_rows x hidden)  W_hh
  Parameter b_;    // (gate_rows)           b_h
  Parameter w_y_;  // (out x hidden)        W_hy
  Parameter b_y_;  // (out)                 b_y

  // Forward cache, one entry per step.
  std::vector<double> inputs_;            // T x in
  std::vector<std::vector<double>> h_;    // T+1 (h_[0] = 0)
  std::vector<std::vector<double>> c_;    // T+1
  std::vector<std::vector<double>> act_;  // post-activation gates per step
};

}  // namespace dialect_lab::nn
