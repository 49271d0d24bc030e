#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "riskcast/core/tensor.hpp"

namespace riskcast {

/// Seeded generator used everywhere randomness is needed. mt19937_64 is
/// fully specified by the standard, so sequences are stable across builds.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; derives independent child seeds from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

/// A learnable tensor with its gradient accumulator.
struct Parameter {
  Tensor value;
  Tensor grad;

  Parameter() = default;
  explicit Parameter(std::vector<std::size_t> shape) : value(shape), grad(shape) {}

  void zero_grad() { grad.fill(0.0); }
};

using NamedParam = std::pair<std::string, Parameter*>;
using ParamList = std::vector<NamedParam>;

/// Glorot-uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor& weight, std::size_t fan_in, std::size_t fan_out, Rng& rng);

void zero_grads(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

}  // namespace riskcast
