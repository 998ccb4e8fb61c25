#pragma once

#include <stdexcept>
#include <string>

namespace copula_rank {

// Every failure raised by the library derives from Error. The CLI maps
// DomainError/ShapeError/ConfigError to exit code 2 and the runtime kinds
// (SingularityError, ConvergenceError, ExperimentError) to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (a quantile
// outside (0,1), a parameter outside Theta, a constant data column).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid model descriptor, experiment config or CLI input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, double estimate)
      : Error(what), estimate_(estimate) {}

  // Offending eigenvalue or reciprocal condition number, whichever the
  // raising site measured.
  double estimate() const noexcept { return estimate_; }

 private:
  double estimate_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::string trace)
      : Error(what), trace_(std::move(trace)) {}

  const std::string& trace() const noexcept { return trace_; }

 private:
  std::string trace_;
};

class ExperimentError : public Error {
 public:
  using Error::Error;
};

}  // namespace copula_rank
