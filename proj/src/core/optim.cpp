#include "riskcast/core/optim.hpp"

#include <cmath>

#include "riskcast/core/error.hpp"

namespace riskcast {

Adam::Adam(AdamConfig config, ParamList params) : config_(config), params_(std::move(params)) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, p] : params_) {
    if (!p->grad.same_shape(p->value)) {
      throw DimensionError("parameter '" + name + "' has gradient shape " +
                           p->grad.shape_string() + " vs value " + p->value.shape_string());
    }
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k].second;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) +
                                  config_.weight_decay * p.value[i]);
    }
  }
}

}  // namespace riskcast
