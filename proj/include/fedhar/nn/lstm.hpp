#pragma once

#include <string>

#include "fedhar/nn/layers.hpp"
#include "fedhar/nn/parameters.hpp"

namespace fedhar::nn {

// LSTM cell over a batch held column-wise. Parameters live under a prefix:
//   <prefix>W_ih  4H x in
//   <prefix>W_hh  4H x H
//   <prefix>b     4H x 1
// Gate rows are stacked input, forget, cell, output.

template <typename Scalar>
struct LstmCellCache {
  Matrix<Scalar> x;
  Matrix<Scalar> h_prev;
  Matrix<Scalar> c_prev;
  Matrix<Scalar> input_gate;
  Matrix<Scalar> forget_gate;
  Matrix<Scalar> candidate;
  Matrix<Scalar> output_gate;
  Matrix<Scalar> tanh_c;
};

template <typename Scalar>
struct LstmCellOutput {
  Matrix<Scalar> h;
  Matrix<Scalar> c;
  LstmCellCache<Scalar> cache;
};

template <typename Scalar>
LstmCellOutput<Scalar> lstm_cell(const Matrix<Scalar>& x, const Matrix<Scalar>& h_prev,
                                 const Matrix<Scalar>& c_prev,
                                 const BasicParameterSet<Scalar>& params,
                                 const std::string& prefix) {
  const auto& w_ih = params.at(prefix + "W_ih");
  const auto& w_hh = params.at(prefix + "W_hh");
  const auto& b = params.at(prefix + "b");
  const auto hidden = w_hh.cols();
  if (w_ih.rows() != 4 * hidden || w_hh.rows() != 4 * hidden || w_ih.cols() != x.rows() ||
      h_prev.rows() != hidden || c_prev.rows() != hidden || h_prev.cols() != x.cols() ||
      c_prev.cols() != x.cols()) {
    throw DimensionError("lstm_cell '" + prefix + "': x " + shape_string(x.rows(), x.cols()) +
                         ", h " + shape_string(h_prev.rows(), h_prev.cols()) + ", W_ih " +
                         shape_string(w_ih.rows(), w_ih.cols()));
  }

  Matrix<Scalar> z = w_ih * x + w_hh * h_prev;
  z.colwise() += b.col(0);

  LstmCellOutput<Scalar> out;
  auto& c = out.cache;
  c.x = x;
  c.h_prev = h_prev;
  c.c_prev = c_prev;
  c.input_gate = sigmoid(z.topRows(hidden));
  c.forget_gate = sigmoid(z.middleRows(hidden, hidden));
  c.candidate = z.middleRows(2 * hidden, hidden).array().tanh().matrix();
  c.output_gate = sigmoid(z.bottomRows(hidden));
  out.c = c.forget_gate.cwiseProduct(c_prev) + c.input_gate.cwiseProduct(c.candidate);
  c.tanh_c = out.c.array().tanh().matrix();
  out.h = c.output_gate.cwiseProduct(c.tanh_c);
  return out;
}

template <typename Scalar>
struct LstmCellGradients {
  Matrix<Scalar> dx;
  Matrix<Scalar> dh_prev;
  Matrix<Scalar> dc_prev;
};

/// Backward through one cell given upstream dh and dc. Parameter gradients
/// are accumulated into `grads` under the same prefix.
template <typename Scalar>
LstmCellGradients<Scalar> lstm_cell_backward(const LstmCellCache<Scalar>& c,
                                             const Matrix<Scalar>& dh, const Matrix<Scalar>& dc,
                                             const BasicParameterSet<Scalar>& params,
                                             BasicParameterSet<Scalar>& grads,
                                             const std::string& prefix) {
  const auto& w_ih = params.at(prefix + "W_ih");
  const auto& w_hh = params.at(prefix + "W_hh");
  const auto hidden = w_hh.cols();

  const auto ones = Matrix<Scalar>::Ones(hidden, dh.cols()).array();
  const Matrix<Scalar> dc_total =
      dc + (dh.array() * c.output_gate.array() * (ones - c.tanh_c.array().square())).matrix();

  Matrix<Scalar> dz(4 * hidden, dh.cols());
  dz.topRows(hidden) = (dc_total.array() * c.candidate.array() * c.input_gate.array() *
                        (ones - c.input_gate.array())).matrix();
  dz.middleRows(hidden, hidden) = (dc_total.array() * c.c_prev.array() *
                                   c.forget_gate.array() * (ones - c.forget_gate.array())).matrix();
  dz.middleRows(2 * hidden, hidden) = (dc_total.array() * c.input_gate.array() *
                                       (ones - c.candidate.array().square())).matrix();
  dz.bottomRows(hidden) = (dh.array() * c.tanh_c.array() * c.output_gate.array() *
                           (ones - c.output_gate.array())).matrix();

  grads.at(prefix + "W_ih").noalias() += dz * c.x.transpose();
  grads.at(prefix + "W_hh").noalias() += dz * c.h_prev.transpose();
  grads.at(prefix + "b").col(0) += dz.rowwise().sum();

  return {w_ih.transpose() * dz, w_hh.transpose() * dz,
          dc_total.cwiseProduct(c.forget_gate)};
}

}  // namespace fedhar::nn
