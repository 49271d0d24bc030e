#include "riskcast/core/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "riskcast/core/error.hpp"

namespace riskcast {

GradCheckResult grad_check(const ParamList& params, const std::function<double()>& loss,
                           const std::function<void()>& backward, double step) {
  zero_grads(params);
  backward();
  GradCheckResult result;
  for (const auto& [name, p] : params) {
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in '" + name + "'");
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = loss();
      p->value[i] = saved - step;
      const double down = loss();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      if (!std::isfinite(numeric)) {
        throw NumericError("non-finite numeric gradient in '" + name + "'");
      }
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > result.max_rel_error) {
        result = {rel, name, i, analytic, numeric};
      }
    }
  }
  return result;
}

}  // namespace riskcast
