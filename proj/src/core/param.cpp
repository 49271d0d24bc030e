#include "riskcast/core/param.hpp"

#include <cmath>

namespace riskcast {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void glorot_uniform(Tensor& weight, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : weight.values()) v = rng.uniform(-a, a);
}

void zero_grads(const ParamList& params) {
  for (const auto& [name, p] : params) p->zero_grad();
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params) n += p->value.size();
  return n;
}

}  // namespace riskcast
