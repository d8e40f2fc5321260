#pragma once

#include <functional>
#include <vector>

#include "osdn/ops.hpp"

namespace osdn {

/// Builds a scalar loss from leaf variables registered on the given tape,
/// in the same order as the input tensors passed to grad_check.
using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Compares the analytic gradient of `build` against central finite
/// differences with step h, elementwise over every input tensor.
/// Relative error is |analytic - numeric| / max(1e-8, |numeric|).
GradCheckReport grad_check(const GraphBuilder& build, const std::vector<Tensor>& inputs,
                           double tol = 1e-3, double h = 1e-4);

}  // namespace osdn
