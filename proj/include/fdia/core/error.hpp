#pragma once

#include <stdexcept>
#include <string>

namespace fdia {

/// Bad input: malformed case/profile/config, missing files, shape mismatches.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (non-convergence, singular system).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NonConvergenceError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// Gain matrix is rank deficient for the given measurement layout.
class UnobservableError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

}  // namespace fdia
