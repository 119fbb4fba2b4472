#pragma once

#include <stdexcept>
#include <string>

namespace mmfc {

/// Bad input: malformed files, inconsistent schema or configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown inside a sampler update (non-SPD matrix, underflow).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside run_chain, tagged with the sweep where it happened.
class ChainError : public std::runtime_error {
 public:
  ChainError(int sweep, const std::string& what)
      : std::runtime_error("sweep " + std::to_string(sweep) + ": " + what), sweep_(sweep) {}
  [[nodiscard]] int sweep() const { return sweep_; }

 private:
  int sweep_;
};

}  // namespace mmfc
