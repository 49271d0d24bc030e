#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "riskcast/core/tensor.hpp"

namespace riskcast {

double sigmoid(double x) noexcept;

/// Softmax of a 1-D sequence with max subtraction.
std::vector<double> softmax(std::span<const double> logits);
/// Softmax of a tensor along its last axis (a rank-1 tensor is one row).
Tensor softmax(const Tensor& logits);
/// Given y = softmax(x) row-wise and dL/dy, returns dL/dx.
Tensor softmax_backward(const Tensor& y, const Tensor& grad_y);

Tensor relu(const Tensor& x);
/// dL/dx for y = relu(x); `pre` is x.
Tensor relu_backward(const Tensor& pre, const Tensor& grad_y);

/// Transition point of the Huber-style smooth L1 loss.
inline constexpr double kSmoothL1Beta = 1.0;

/// Mean over elements of 0.5 d^2 / beta (|d| < beta) or |d| - 0.5 beta.
double smooth_l1(const Tensor& pred, const Tensor& target, double beta = kSmoothL1Beta);
/// Gradient of smooth_l1 with respect to `pred`.
Tensor smooth_l1_grad(const Tensor& pred, const Tensor& target, double beta = kSmoothL1Beta);

inline constexpr double kProbabilityFloor = 1e-12;

/// -log(max(p[target], 1e-12)).
double cross_entropy(std::span<const double> probs, std::size_t target);
double cross_entropy(const Tensor& probs, std::size_t target);

}  // namespace riskcast
