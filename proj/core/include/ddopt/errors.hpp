#pragma once

#include <stdexcept>
#include <string>

namespace ddopt {

// All library failures derive from Error so callers can distinguish
// library conditions from std:: logic bugs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Configuration file / override problems. The CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An iterative scheme hit its iteration cap; carries the last residual.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Normalization or angle computation met a (near-)zero vector.
class DegenerateStateError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

// Spectral radius >= 1 where a Schur-stable matrix is required.
class StabilityError : public Error {
 public:
  using Error::Error;
};

// Constraint set empty, masses inconsistent, or similar.
class FeasibilityError : public Error {
 public:
  using Error::Error;
};

// Requested a certificate or closed form the model variant does not admit.
class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddopt
