// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "vdcnn/tensor.hpp"

namespace vdcnn {

struct GradCheckReport {
  std::string op_name;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Scalar loss and its analytic gradient at a point.
using LossAndGrad = std::function<std::pair<double, Tensor>(const Tensor&)>;

/// Central differences with step 1e-5; per-element error is
/// |g_a - g_n| / max(1, |g_a|, |g_n|) and the report carries the maximum.
inline GradCheckReport grad_check(std::string op_name, const LossAndGrad& op,
                                  const Tensor& point, double tolerance,
                                  double step = 1e-5) {
  const Tensor analytic = op(point).second;
  point.require_same_shape(analytic, "grad_check");
  Tensor x = point;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = op(x).first;
    x[i] = saved - step;
    const double down = op(x).first;
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return {std::move(op_name), worst, worst < tolerance};
}

}  // namespace vdcnn
