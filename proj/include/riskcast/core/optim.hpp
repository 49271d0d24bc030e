#pragma once

#include <cstddef>
#include <vector>

#include "riskcast/core/param.hpp"

namespace riskcast {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 3e-4;  // decoupled, scaled by lr
};

/// Adam with bias correction and decoupled weight decay:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
class Adam {
 public:
  Adam(AdamConfig config, ParamList params);

  void step();
  void zero_grad() { zero_grads(params_); }

  std::size_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  ParamList params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

}  // namespace riskcast
