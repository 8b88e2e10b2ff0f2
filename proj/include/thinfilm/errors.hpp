#ifndef THINFILM_ERRORS_HPP
#define THINFILM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace thinfilm {

/// Base class of every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Poisson right-hand side violates the compatibility condition.
class NonZeroMean : public Error {
 public:
  using Error::Error;
};

/// Some cell has d2(w) + c0 <= 0, i.e. the state is outside the domain of phi.
class NonPositiveCurvature : public Error {
 public:
  using Error::Error;
};

class DomainViolation : public Error {
 public:
  using Error::Error;
};

/// Newton failed for every step size down to tau_min.
class NewtonDiverged : public Error {
 public:
  NewtonDiverged(const std::string& what, long step = -1)
      : Error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class NonPositiveSlope : public Error {
 public:
  using Error::Error;
};

/// Slope dropped below the validity floor of the explicit slope integrator.
class SlopeDegenerate : public Error {
 public:
  SlopeDegenerate(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class GridMismatch : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace thinfilm

#endif  // THINFILM_ERRORS_HPP
