#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace geoflow {

/// Base class of every exception raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite inputs, out-of-range arguments, malformed points.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Two operands live on different grids (or have different dimensions).
class GridMismatch : public Error {
public:
  using Error::Error;
};

/// A file could not be opened, read, written or parsed.
class IoError : public Error {
public:
  using Error::Error;
};

/// An integrator produced a non-finite state.
class BlowUpError : public Error {
public:
  BlowUpError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

/// An iterative solver failed to reach its tolerance.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, double best_residual)
      : Error(what + " (best residual " + std::to_string(best_residual) + ")"),
        reason_(what),
        best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }
  /// The message without the residual suffix.
  const std::string& reason() const noexcept { return reason_; }

private:
  std::string reason_;
  double best_residual_;
};

}  // namespace geoflow
