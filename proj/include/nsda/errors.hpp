#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nsda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operands live on different grids or have incompatible shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a structural invariant (solenoidality, symmetry, finiteness).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

/// Config file syntax or schema problem; carries the offending line (0 if none).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line) : Error(format(what, line)), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& what, int line) {
    return line > 0 ? "line " + std::to_string(line) + ": " + what : what;
  }
  int line_;
};

/// Iterative solver failed; `history` holds the residual (or increment) trace.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }
  double final_residual() const noexcept { return history_.empty() ? -1.0 : history_.back(); }

 private:
  std::vector<double> history_;
};

}  // namespace nsda
