#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fedhar/nn/parameters.hpp"

namespace fedhar::nn {

/// What a checked loss function returns: scalar loss and its analytic
/// gradient with the parameter layout.
struct LossAndGradients {
  double loss = 0.0;
  GradientSet grads;
};

struct GradientCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool within_tolerance = true;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double max_relative_error = 0.0;
  bool passed = true;
};

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Compares the analytic gradient returned by `loss_fn(params)` against
/// central differences with step 1e-5, element by element.
template <typename LossFn>
GradientCheckReport gradient_check(LossFn&& loss_fn, const ParameterSet& params,
                                   double tolerance) {
  const LossAndGradients analytic = loss_fn(params);
  require_congruent(params, analytic.grads, "gradient_check");

  GradientCheckReport report;
  ParameterSet probe = params;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    GradientCheckEntry entry;
    entry.name = probe[i].name;
    auto& value = probe[i].value;
    for (Eigen::Index c = 0; c < value.cols(); ++c) {
      for (Eigen::Index r = 0; r < value.rows(); ++r) {
        const double original = value(r, c);
        value(r, c) = original + kFiniteDifferenceStep;
        const double plus = loss_fn(std::as_const(probe)).loss;
        value(r, c) = original - kFiniteDifferenceStep;
        const double minus = loss_fn(std::as_const(probe)).loss;
        value(r, c) = original;

        const double numeric = (plus - minus) / (2.0 * kFiniteDifferenceStep);
        const double a = analytic.grads[i].value(r, c);
        const double err = relative_error(a, numeric);
        if (err > entry.max_relative_error || (r == 0 && c == 0)) {
          entry.max_relative_error = err;
          entry.worst_row = r;
          entry.worst_col = c;
          entry.analytic = a;
          entry.numeric = numeric;
        }
      }
    }
    entry.within_tolerance = entry.max_relative_error < tolerance;
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.passed = report.passed && entry.within_tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace fedhar::nn
