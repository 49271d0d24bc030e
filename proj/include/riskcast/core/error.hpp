#pragma once

#include <stdexcept>
#include <string>

namespace riskcast {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input document or value violates a data-model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical computation produced NaN/Inf or cannot proceed.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace riskcast
