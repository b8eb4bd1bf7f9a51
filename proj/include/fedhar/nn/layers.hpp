#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include <Eigen/Core>

#include "fedhar/error.hpp"
#include "fedhar/nn/parameters.hpp"

namespace fedhar::nn {

/// Added to the variance inside layer_norm.
template <typename Scalar>
inline constexpr Scalar kLayerNormEpsilon = Scalar(1e-12);

// ---------------------------------------------------------------------------
// dense: y = W x + b, applied to every column of x.

template <typename DerivedX, typename DerivedW, typename DerivedB>
Matrix<typename DerivedX::Scalar> dense(const Eigen::MatrixBase<DerivedX>& x,
                                        const Eigen::MatrixBase<DerivedW>& w,
                                        const Eigen::MatrixBase<DerivedB>& b) {
  if (w.cols() != x.rows() || b.rows() != w.rows() || b.cols() != 1) {
    throw DimensionError("dense: W " + shape_string(w.rows(), w.cols()) + ", x " +
                         shape_string(x.rows(), x.cols()) + ", b " +
                         shape_string(b.rows(), b.cols()));
  }
  Matrix<typename DerivedX::Scalar> y = w * x;
  y.colwise() += b.col(0);
  return y;
}

template <typename Scalar>
struct DenseGradients {
  Matrix<Scalar> dx;
  Matrix<Scalar> dw;
  Matrix<Scalar> db;
};

template <typename DerivedX, typename DerivedW, typename DerivedY>
DenseGradients<typename DerivedX::Scalar> dense_backward(
    const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedW>& w,
    const Eigen::MatrixBase<DerivedY>& dy) {
  if (dy.rows() != w.rows() || dy.cols() != x.cols() || w.cols() != x.rows()) {
    throw DimensionError("dense_backward: dy " + shape_string(dy.rows(), dy.cols()) +
                         " incompatible with W " + shape_string(w.rows(), w.cols()));
  }
  return {w.transpose() * dy, dy * x.transpose(), dy.rowwise().sum()};
}

// ---------------------------------------------------------------------------
// Elementwise activations.

template <typename Derived>
Matrix<typename Derived::Scalar> sigmoid(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();
}

template <typename Derived>
Matrix<typename Derived::Scalar> relu(const Eigen::MatrixBase<Derived>& z) {
  return z.cwiseMax(typename Derived::Scalar(0));
}

/// Gradient of relu given its pre-activation input.
template <typename DerivedZ, typename DerivedY>
Matrix<typename DerivedZ::Scalar> relu_backward(const Eigen::MatrixBase<DerivedZ>& z,
                                                const Eigen::MatrixBase<DerivedY>& dy) {
  using Scalar = typename DerivedZ::Scalar;
  return (z.array() > Scalar(0)).select(dy.array(), Scalar(0)).matrix();
}

// ---------------------------------------------------------------------------
// Column-wise softmax and cross-entropy. Column j holds the logits of
// sample j.

template <typename Derived>
Matrix<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> shifted = logits.rowwise() - logits.colwise().maxCoeff();
  const auto log_norm = shifted.array().exp().colwise().sum().log().eval();
  shifted.array().rowwise() -= log_norm;
  return shifted;
}

template <typename Scalar>
struct CrossEntropy {
  Scalar loss;             ///< mean over columns
  Matrix<Scalar> dlogits;  ///< gradient of the mean loss
};

template <typename Derived>
CrossEntropy<typename Derived::Scalar> softmax_cross_entropy(
    const Eigen::MatrixBase<Derived>& logits, std::span<const std::size_t> labels) {
  using Scalar = typename Derived::Scalar;
  const auto batch = logits.cols();
  if (static_cast<std::size_t>(batch) != labels.size() || batch == 0) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(batch) +
                         " logit columns for " + std::to_string(labels.size()) + " labels");
  }
  const Matrix<Scalar> log_p = log_softmax(logits);
  CrossEntropy<Scalar> out{Scalar(0), log_p.array().exp().matrix()};
  for (Eigen::Index j = 0; j < batch; ++j) {
    const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(j)]);
    if (label >= logits.rows()) {
      throw DimensionError("softmax_cross_entropy: label " + std::to_string(label) +
                           " out of range for " + std::to_string(logits.rows()) + " classes");
    }
    out.loss -= log_p(label, j);
    out.dlogits(label, j) -= Scalar(1);
  }
  out.loss /= Scalar(batch);
  out.dlogits /= Scalar(batch);
  using std::isfinite;
  if (!isfinite(out.loss)) throw NumericHealthError("softmax_cross_entropy: non-finite loss");
  return out;
}

/// Single-sample loss, -log softmax(logits)[label].
template <typename Derived>
typename Derived::Scalar softmax_cross_entropy(const Eigen::MatrixBase<Derived>& logits,
                                               std::size_t label) {
  const std::size_t labels[] = {label};
  return softmax_cross_entropy(logits, std::span<const std::size_t>(labels)).loss;
}

// ---------------------------------------------------------------------------
// Layer normalisation over the rows of each column.

template <typename Scalar>
struct LayerNormCache {
  Matrix<Scalar> normalized;           // pre-gain output
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> inv_std;
};

template <typename Scalar>
struct LayerNormOutput {
  Matrix<Scalar> y;
  LayerNormCache<Scalar> cache;
};

template <typename Scalar>
LayerNormOutput<Scalar> layer_norm_forward(const Matrix<Scalar>& x, const Matrix<Scalar>& gamma,
                                           const Matrix<Scalar>& beta) {
  if (gamma.rows() != x.rows() || beta.rows() != x.rows() || gamma.cols() != 1 ||
      beta.cols() != 1) {
    throw DimensionError("layer_norm: x " + shape_string(x.rows(), x.cols()) + ", gamma " +
                         shape_string(gamma.rows(), gamma.cols()));
  }
  const auto d = static_cast<Scalar>(x.rows());
  LayerNormOutput<Scalar> out;
  auto& c = out.cache;
  c.normalized = x.rowwise() - x.colwise().mean();
  const auto var = (c.normalized.array().square().colwise().sum() / d).eval();
  c.inv_std = (var + kLayerNormEpsilon<Scalar>).rsqrt().matrix();
  c.normalized.array().rowwise() *= c.inv_std.array();
  out.y = c.normalized.array().colwise() * gamma.col(0).array();
  out.y.colwise() += beta.col(0);
  return out;
}

template <typename Scalar>
Matrix<Scalar> layer_norm(const Matrix<Scalar>& x, const Matrix<Scalar>& gamma,
                          const Matrix<Scalar>& beta) {
  return layer_norm_forward(x, gamma, beta).y;
}

/// Returns dx; accumulates into dgamma and dbeta.
template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const LayerNormCache<Scalar>& cache, const Matrix<Scalar>& dy,
                                   const Matrix<Scalar>& gamma, Matrix<Scalar>& dgamma,
                                   Matrix<Scalar>& dbeta) {
  const auto d = static_cast<Scalar>(dy.rows());
  const auto& xhat = cache.normalized;
  dgamma.col(0) += (dy.array() * xhat.array()).rowwise().sum().matrix();
  dbeta.col(0) += dy.rowwise().sum();

  Matrix<Scalar> dxhat = dy.array().colwise() * gamma.col(0).array();
  const auto mean_dxhat = (dxhat.colwise().sum() / d).eval();
  const auto mean_dxhat_xhat = ((dxhat.array() * xhat.array()).colwise().sum() / d).eval();
  Matrix<Scalar> dx = dxhat.rowwise() - mean_dxhat;
  dx.array() -= xhat.array().rowwise() * mean_dxhat_xhat;
  dx.array().rowwise() *= cache.inv_std.array();
  return dx;
}

// ---------------------------------------------------------------------------

/// Fixed sinusoidal encoding as a d x T matrix; column t encodes position t.
/// Row 2i holds sin(t / 10000^(2i/d)), row 2i+1 the matching cosine.
template <typename Scalar = double>
Matrix<Scalar> positional_encoding(Eigen::Index steps, Eigen::Index dim) {
  using std::cos;
  using std::pow;
  using std::sin;
  Matrix<Scalar> pe(dim, steps);
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const Eigen::Index pair = i / 2;
      const Scalar rate = pow(Scalar(10000), Scalar(2 * pair) / Scalar(dim));
      const Scalar angle = Scalar(t) / rate;
      pe(i, t) = (i % 2 == 0) ? sin(angle) : cos(angle);
    }
  }
  return pe;
}

}  // namespace fedhar::nn
