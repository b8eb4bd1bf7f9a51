#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fedhar/nn/layers.hpp"
#include "fedhar/nn/parameters.hpp"

namespace fedhar::nn {

// ---------------------------------------------------------------------------
// Multi-head self-attention over one sequence x (d x T, one token per
// column). Parameters under a prefix: Wq, bq, Wk, bk, Wv, bv, Wo, bo with
// d x d weights and d x 1 biases. No masking.

template <typename Scalar>
struct AttentionCache {
  Matrix<Scalar> x;
  Matrix<Scalar> q;
  Matrix<Scalar> k;
  Matrix<Scalar> v;
  Matrix<Scalar> heads_out;             // concatenated head outputs, d x T
  std::vector<Matrix<Scalar>> weights;  // per head, key x query, columns sum to 1
};

template <typename Scalar>
struct AttentionOutput {
  Matrix<Scalar> y;
  AttentionCache<Scalar> cache;
};

template <typename Scalar>
AttentionOutput<Scalar> multi_head_attention(const Matrix<Scalar>& x,
                                             const BasicParameterSet<Scalar>& params,
                                             const std::string& prefix, Eigen::Index heads) {
  const auto d = x.rows();
  if (heads <= 0 || d % heads != 0) {
    throw DimensionError("multi_head_attention: " + std::to_string(heads) +
                         " heads do not divide model dimension " + std::to_string(d));
  }
  const auto& wq = params.at(prefix + "Wq");
  if (wq.rows() != d || wq.cols() != d) {
    throw DimensionError("multi_head_attention '" + prefix + "': Wq " +
                         shape_string(wq.rows(), wq.cols()) + " for d = " + std::to_string(d));
  }
  const auto dk = d / heads;
  using std::sqrt;
  const Scalar scale = Scalar(1) / sqrt(Scalar(dk));

  AttentionOutput<Scalar> out;
  auto& c = out.cache;
  c.x = x;
  c.q = dense(x, wq, params.at(prefix + "bq"));
  c.k = dense(x, params.at(prefix + "Wk"), params.at(prefix + "bk"));
  c.v = dense(x, params.at(prefix + "Wv"), params.at(prefix + "bv"));
  c.heads_out.resize(d, x.cols());
  c.weights.resize(static_cast<std::size_t>(heads));
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto qh = c.q.middleRows(h * dk, dk);
    const auto kh = c.k.middleRows(h * dk, dk);
    // scores(j, i) = <k_j, q_i> * scale; softmax down each column (over keys).
    auto& p = c.weights[static_cast<std::size_t>(h)];
    p = softmax((kh.transpose() * qh * scale).eval());
    c.heads_out.middleRows(h * dk, dk).noalias() = c.v.middleRows(h * dk, dk) * p;
  }
  out.y = dense(c.heads_out, params.at(prefix + "Wo"), params.at(prefix + "bo"));
  return out;
}

/// Returns dx; accumulates parameter gradients into `grads`.
template <typename Scalar>
Matrix<Scalar> multi_head_attention_backward(const AttentionCache<Scalar>& c,
                                             const Matrix<Scalar>& dy,
                                             const BasicParameterSet<Scalar>& params,
                                             BasicParameterSet<Scalar>& grads,
                                             const std::string& prefix) {
  const auto d = c.x.rows();
  const auto heads = static_cast<Eigen::Index>(c.weights.size());
  const auto dk = d / heads;
  using std::sqrt;
  const Scalar scale = Scalar(1) / sqrt(Scalar(dk));

  const auto& wo = params.at(prefix + "Wo");
  grads.at(prefix + "Wo").noalias() += dy * c.heads_out.transpose();
  grads.at(prefix + "bo").col(0) += dy.rowwise().sum();
  const Matrix<Scalar> d_heads = wo.transpose() * dy;

  Matrix<Scalar> dq(d, c.x.cols());
  Matrix<Scalar> dk_all(d, c.x.cols());
  Matrix<Scalar> dv(d, c.x.cols());
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto& p = c.weights[static_cast<std::size_t>(h)];
    const auto d_out = d_heads.middleRows(h * dk, dk);
    const auto vh = c.v.middleRows(h * dk, dk);
    dv.middleRows(h * dk, dk).noalias() = d_out * p.transpose();
    const Matrix<Scalar> dp = vh.transpose() * d_out;
    // Softmax backward down each column.
    Matrix<Scalar> ds = p.array() * (dp.rowwise() - (p.array() * dp.array()).colwise().sum().matrix()).array();
    ds *= scale;
    dq.middleRows(h * dk, dk).noalias() = c.k.middleRows(h * dk, dk) * ds;
    dk_all.middleRows(h * dk, dk).noalias() = c.q.middleRows(h * dk, dk) * ds.transpose();
  }

  Matrix<Scalar> dx = Matrix<Scalar>::Zero(d, c.x.cols());
  const auto accumulate = [&](const char* w_name, const char* b_name, const Matrix<Scalar>& dproj) {
    grads.at(prefix + w_name).noalias() += dproj * c.x.transpose();
    grads.at(prefix + b_name).col(0) += dproj.rowwise().sum();
    dx.noalias() += params.at(prefix + w_name).transpose() * dproj;
  };
  accumulate("Wq", "bq", dq);
  accumulate("Wk", "bk", dk_all);
  accumulate("Wv", "bv", dv);
  return dx;
}

// ---------------------------------------------------------------------------
// Post-norm encoder layer over a batch of sequences packed side by side:
// x is d x (T * B) with sample b occupying columns [b*T, (b+1)*T).
//
//   z1 = norm1(x + attn(x)),   y = norm2(z1 + ff2(relu(ff1(z1))))
//
// Parameters under a prefix: attn.*, norm1.{gamma,beta}, ff1.{W,b},
// ff2.{W,b}, norm2.{gamma,beta}.

template <typename Scalar>
struct EncoderLayerCache {
  std::vector<AttentionCache<Scalar>> attention;  // one per sequence
  LayerNormCache<Scalar> norm1;
  Matrix<Scalar> z1;
  Matrix<Scalar> ff_pre;
  Matrix<Scalar> ff_act;
  LayerNormCache<Scalar> norm2;
};

template <typename Scalar>
struct EncoderLayerOutput {
  Matrix<Scalar> y;
  EncoderLayerCache<Scalar> cache;
};

template <typename Scalar>
EncoderLayerOutput<Scalar> encoder_layer(const Matrix<Scalar>& x, Eigen::Index steps,
                                         const BasicParameterSet<Scalar>& params,
                                         const std::string& prefix, Eigen::Index heads) {
  if (steps <= 0 || x.cols() % steps != 0) {
    throw DimensionError("encoder_layer: " + std::to_string(x.cols()) +
                         " columns are not a whole number of " + std::to_string(steps) +
                         "-step sequences");
  }
  const auto batch = x.cols() / steps;
  EncoderLayerOutput<Scalar> out;
  auto& c = out.cache;
  c.attention.reserve(static_cast<std::size_t>(batch));

  Matrix<Scalar> residual = x;
  for (Eigen::Index b = 0; b < batch; ++b) {
    auto attn = multi_head_attention<Scalar>(x.middleCols(b * steps, steps), params,
                                             prefix + "attn.", heads);
    residual.middleCols(b * steps, steps) += attn.y;
    c.attention.push_back(std::move(attn.cache));
  }
  auto n1 = layer_norm_forward(residual, params.at(prefix + "norm1.gamma"),
                               params.at(prefix + "norm1.beta"));
  c.norm1 = std::move(n1.cache);
  c.z1 = std::move(n1.y);
  c.ff_pre = dense(c.z1, params.at(prefix + "ff1.W"), params.at(prefix + "ff1.b"));
  c.ff_act = relu(c.ff_pre);
  Matrix<Scalar> r2 = c.z1 + dense(c.ff_act, params.at(prefix + "ff2.W"), params.at(prefix + "ff2.b"));
  auto n2 = layer_norm_forward(r2, params.at(prefix + "norm2.gamma"),
                               params.at(prefix + "norm2.beta"));
  c.norm2 = std::move(n2.cache);
  out.y = std::move(n2.y);
  return out;
}

template <typename Scalar>
Matrix<Scalar> encoder_layer_backward(const EncoderLayerCache<Scalar>& c, const Matrix<Scalar>& dy,
                                      const BasicParameterSet<Scalar>& params,
                                      BasicParameterSet<Scalar>& grads,
                                      const std::string& prefix) {
  const Matrix<Scalar> dr2 =
      layer_norm_backward(c.norm2, dy, params.at(prefix + "norm2.gamma"),
                          grads.at(prefix + "norm2.gamma"), grads.at(prefix + "norm2.beta"));

  const auto ff2 = dense_backward(c.ff_act, params.at(prefix + "ff2.W"), dr2);
  grads.at(prefix + "ff2.W") += ff2.dw;
  grads.at(prefix + "ff2.b") += ff2.db;
  const Matrix<Scalar> d_pre = relu_backward(c.ff_pre, ff2.dx);
  const auto ff1 = dense_backward(c.z1, params.at(prefix + "ff1.W"), d_pre);
  grads.at(prefix + "ff1.W") += ff1.dw;
  grads.at(prefix + "ff1.b") += ff1.db;
  const Matrix<Scalar> dz1 = dr2 + ff1.dx;

  const Matrix<Scalar> dr1 =
      layer_norm_backward(c.norm1, dz1, params.at(prefix + "norm1.gamma"),
                          grads.at(prefix + "norm1.gamma"), grads.at(prefix + "norm1.beta"));

  Matrix<Scalar> dx = dr1;
  const auto steps = c.attention.empty() ? Eigen::Index(0) : c.attention.front().x.cols();
  for (std::size_t b = 0; b < c.attention.size(); ++b) {
    const auto offset = static_cast<Eigen::Index>(b) * steps;
    dx.middleCols(offset, steps) += multi_head_attention_backward<Scalar>(
        c.attention[b], dr1.middleCols(offset, steps), params, grads, prefix + "attn.");
  }
  return dx;
}

}  // namespace fedhar::nn
