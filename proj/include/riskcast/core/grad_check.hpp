#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "riskcast/core/param.hpp"

namespace riskcast {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares analytic gradients against central differences.
///
/// `loss` evaluates the scalar objective at the current parameter values;
/// `backward` must leave d(loss)/d(param) in every Parameter::grad (the
/// checker zeroes grads before calling it). Inputs can be checked too by
/// wrapping them in a Parameter. Error per element is
/// |a - n| / max(|a|, |n|, 1e-8). Throws NumericError on non-finite grads.
GradCheckResult grad_check(const ParamList& params, const std::function<double()>& loss,
                           const std::function<void()>& backward, double step = 1e-5);

}  // namespace riskcast
