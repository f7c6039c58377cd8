#pragma once

#include <stdexcept>
#include <string>

namespace polyrow {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Polyline or fit that has collapsed (too few distinct points, zero
/// length, rank-deficient design matrix).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Input data that violates a schema or annotation rule.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Gradient descent blew up.
class DivergenceError : public Error {
 public:
  DivergenceError(int iteration, double loss)
      : Error("optimisation diverged at iteration " + std::to_string(iteration) +
              " (loss " + std::to_string(loss) + ")"),
        iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace polyrow
