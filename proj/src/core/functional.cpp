#include "riskcast/core/functional.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "riskcast/core/error.hpp"

namespace riskcast {

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Tensor softmax(const Tensor& logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  Tensor out = logits;
  const std::size_t width = logits.shape().back();
  for (std::size_t r = 0; r * width < logits.size(); ++r) {
    auto row = std::span<const double>(logits.values()).subspan(r * width, width);
    auto sm = softmax(row);
    std::copy(sm.begin(), sm.end(), out.values().begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  return out;
}

Tensor softmax_backward(const Tensor& y, const Tensor& grad_y) {
  require_same_shape(y, grad_y, "softmax_backward");
  Tensor out = y;
  const std::size_t width = y.shape().back();
  for (std::size_t base = 0; base < y.size(); base += width) {
    double dot = 0.0;
    for (std::size_t j = 0; j < width; ++j) dot += y[base + j] * grad_y[base + j];
    for (std::size_t j = 0; j < width; ++j) out[base + j] = y[base + j] * (grad_y[base + j] - dot);
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& pre, const Tensor& grad_y) {
  require_same_shape(pre, grad_y, "relu_backward");
  Tensor out = grad_y;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (pre[i] <= 0.0) out[i] = 0.0;
  return out;
}

double smooth_l1(const Tensor& pred, const Tensor& target, double beta) {
  require_same_shape(pred, target, "smooth_l1");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = std::abs(pred[i] - target[i]);
    sum += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
  }
  return sum / static_cast<double>(pred.size());
}

Tensor smooth_l1_grad(const Tensor& pred, const Tensor& target, double beta) {
  require_same_shape(pred, target, "smooth_l1_grad");
  Tensor g(pred.shape());
  if (pred.empty()) return g;
  const double scale = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    if (std::abs(d) < beta) {
      g[i] = scale * d / beta;
    } else {
      g[i] = d > 0.0 ? scale : -scale;
    }
  }
  return g;
}

double cross_entropy(std::span<const double> probs, std::size_t target) {
  if (target >= probs.size()) {
    throw DimensionError("cross_entropy: target index " + std::to_string(target) +
                         " out of range for " + std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[target], kProbabilityFloor));
}

double cross_entropy(const Tensor& probs, std::size_t target) {
  return cross_entropy(probs.values(), target);
}

}  // namespace riskcast
