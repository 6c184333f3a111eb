#pragma once

#include <stdexcept>
#include <string>

namespace qhbm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix sizes do not agree with the system they are used with.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The Jacobian lost rank; usually the branch is at or very near a bifurcation.
class SingularPointError : public Error {
 public:
  using Error::Error;
};

/// An iterative procedure (Newton, step-size control) gave up.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration or model file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace qhbm
