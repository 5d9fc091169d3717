#pragma once

#include <stdexcept>
#include <string>

namespace esnp {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An operation was applied to a field on the wrong kind of domain,
/// or two fields live on different grids.
class DomainMismatchError : public Error {
public:
  using Error::Error;
};

/// Input violates a mathematical precondition (mean-zero, neutrality, ...).
class PreconditionError : public Error {
public:
  using Error::Error;
};

class ArgumentError : public Error {
public:
  using Error::Error;
};

/// An iterative solver did not reach its tolerance.
class SolverError : public Error {
public:
  SolverError(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

private:
  double residual_;
  int iterations_;
};

/// The time step violates the advective CFL guard.
class StepRejectedError : public Error {
public:
  StepRejectedError(const std::string& what, double advised_dt)
      : Error(what), advised_dt_(advised_dt) {}
  double advised_dt() const noexcept { return advised_dt_; }

private:
  double advised_dt_;
};

/// Non-finite values or unrecoverable loss of positivity.
class BlowUpError : public Error {
public:
  BlowUpError(const std::string& what, long step_index)
      : Error(what), step_index_(step_index) {}
  long step_index() const noexcept { return step_index_; }

private:
  long step_index_;
};

class ConfigError : public Error {
public:
  ConfigError(const std::string& what, int line = 0) : Error(what), line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

/// Too few samples for a statistical estimate to mean anything.
class UnderpoweredError : public Error {
public:
  using Error::Error;
};

}  // namespace esnp
