#pragma once

#include <cmath>
#include <cstdint>

#include "fedhar/nn/parameters.hpp"

namespace fedhar::nn {

struct AdamHyperparameters {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct BasicAdamState {
  BasicParameterSet<Scalar> m;
  BasicParameterSet<Scalar> v;
  std::uint64_t t = 0;
  AdamHyperparameters hyper;

  /// Fresh state with zero moments shaped like `params`.
  static BasicAdamState for_params(const BasicParameterSet<Scalar>& params,
                                   AdamHyperparameters hyper = {}) {
    return {BasicParameterSet<Scalar>::zeros_like(params),
            BasicParameterSet<Scalar>::zeros_like(params), 0, hyper};
  }
};

using AdamState = BasicAdamState<double>;

/// One bias-corrected Adam update of `params` in place; advances state.t.
template <typename Scalar>
void adam_step(BasicParameterSet<Scalar>& params, const BasicParameterSet<Scalar>& grads,
               BasicAdamState<Scalar>& state) {
  require_congruent(params, grads, "adam_step gradients");
  require_congruent(params, state.m, "adam_step first moment");
  require_congruent(params, state.v, "adam_step second moment");

  const auto& h = state.hyper;
  ++state.t;
  using std::pow;
  const Scalar b1 = Scalar(h.beta1);
  const Scalar b2 = Scalar(h.beta2);
  const Scalar correction1 = Scalar(1) - pow(b1, Scalar(state.t));
  const Scalar correction2 = Scalar(1) - pow(b2, Scalar(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value;
    auto& m = state.m[i].value;
    auto& v = state.v[i].value;
    const auto& g = grads[i].value;
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    p.array() -= Scalar(h.lr) * (m.array() / correction1) /
                 ((v.array() / correction2).sqrt() + Scalar(h.epsilon));
  }
}

}  // namespace fedhar::nn
