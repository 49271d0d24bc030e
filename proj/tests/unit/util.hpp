#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>

#include "riskcast/core/param.hpp"
#include "riskcast/core/tensor.hpp"

namespace testutil {

inline riskcast::Tensor random_tensor(std::vector<std::size_t> shape, riskcast::Rng& rng,
                                      double scale = 1.0) {
  riskcast::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

inline void randomize(const riskcast::ParamList& params, riskcast::Rng& rng, double scale = 0.5) {
  for (auto& [name, p] : params) {
    for (auto& v : p->value.values()) v = rng.uniform(-scale, scale);
  }
}

/// Sum of w * t over elements, used to turn tensor outputs into a scalar.
inline double weighted_sum(const riskcast::Tensor& t, const riskcast::Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

}  // namespace testutil

namespace testutil {

/// Random output weights for gradient checks. Keeping the probed loss small
/// keeps central-difference roundoff (~eps * |loss| / h) well under the 1e-8
/// denominator floor, so structurally zero gradients (e.g. key biases in
/// attention) do not register as errors.
inline riskcast::Tensor probe(std::vector<std::size_t> shape, riskcast::Rng& rng, double scale = 1e-3) {
  return random_tensor(std::move(shape), rng, scale);
}

}  // namespace testutil

namespace testutil {

inline riskcast::Parameter* find_param(const riskcast::ParamList& params, const std::string& name) {
  for (const auto& [n, p] : params)
    if (n == name) return p;
  return nullptr;
}

inline void zero_params_with_prefix(const riskcast::ParamList& params, const std::string& prefix) {
  for (const auto& [n, p] : params)
    if (n.rfind(prefix, 0) == 0) p->value.fill(0.0);
}

}  // namespace testutil

#include "riskcast/model.hpp"

namespace testutil {

/// Small network and short horizons so finite differences stay cheap.
inline riskcast::ModelConfig tiny_model_config(std::size_t future_steps = 4) {
  riskcast::ModelConfig cfg;
  cfg.interaction.embed_dim = 8;
  cfg.interaction.attention_heads = 2;
  cfg.intention.hidden = 6;
  cfg.intention.class_embed_dim = 3;
  cfg.intention.feature_dim = 4;
  cfg.decoder.modes = 3;
  cfg.decoder.future_steps = future_steps;
  cfg.decoder.hidden = 8;
  return cfg;
}

inline riskcast::GeneratorConfig short_horizon(std::size_t history = 3, std::size_t future = 4) {
  riskcast::GeneratorConfig g;
  g.history_steps = history;
  g.future_steps = future;
  return g;
}

}  // namespace testutil

namespace testutil {

inline double min_abs(const riskcast::Tensor& t) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : t.values()) m = std::min(m, std::abs(v));
  return m;
}

inline double min_abs(const riskcast::MlpCache& c) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : c.pre) m = std::min(m, min_abs(p));
  return m;
}

/// Gap between the largest and second-largest entry of each column.
inline double min_pool_gap(const riskcast::Tensor& x) {
  double m = std::numeric_limits<double>::infinity();
  if (x.rows() < 2) return m;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double a = -std::numeric_limits<double>::infinity(), b = a;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double v = x(r, c);
      if (v > a) b = a, a = v;
      else if (v > b) b = v;
    }
    m = std::min(m, a - b);
  }
  return m;
}

/// Distance of the forward pass from the nearest non-differentiable point
/// (ReLU hinge or max-pool tie). Finite differences are only meaningful when
/// this is well above the perturbation size.
inline double kink_margin(const riskcast::ModelCache& c) {
  double m = min_abs(c.interaction.map_mlp);
  for (const auto& g : c.interaction.groups)
    for (const auto& b : g.blocks) m = std::min(m, min_abs(b.ff_pre));
  if (!c.interaction.map_rows.empty()) m = std::min(m, min_abs(c.interaction.map_block.ff_pre));
  m = std::min({m, min_abs(c.intention.lateral_mlp), min_abs(c.intention.longitudinal_mlp),
                min_abs(c.intention.fuse_mlp), min_abs(c.decoder.trajectory_mlp), min_abs(c.decoder.prob_mlp),
                min_pool_gap(c.decoder.input)});
  return m;
}

}  // namespace testutil
