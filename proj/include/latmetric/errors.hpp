#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace latmetric {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed configs, out-of-range parameters, shape mismatches.
/// The CLI maps this family to exit status 1.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidSector : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class IncompatibleSector : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Sector too large for the configured memory budget / dimension cap.
class CapacityError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Target density has (near-)empty sites; the density-to-potential map is
/// numerically lost there.
class IllConditionedTarget : public InvalidArgument {
 public:
  IllConditionedTarget(const std::string& what, std::size_t site, double value)
      : InvalidArgument(what), site_(site), value_(value) {}
  std::size_t site() const noexcept { return site_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t site_;
  double value_;
};

/// Numerical failure. The CLI maps this family to exit status 2.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, double estimate = 0.0)
      : Error(what), estimate_(estimate) {}
  /// Best value / residual reached before giving up.
  double estimate() const noexcept { return estimate_; }

 private:
  double estimate_;
};

class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, double best_residual,
                   std::vector<double> trace = {})
      : NumericError(what, best_residual), trace_(std::move(trace)) {}
  double best_residual() const noexcept { return estimate(); }
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

class DegeneracyError : public NumericError {
 public:
  DegeneracyError(const std::string& what, double gap) : NumericError(what, gap) {}
  double gap() const noexcept { return estimate(); }
};

}  // namespace latmetric
