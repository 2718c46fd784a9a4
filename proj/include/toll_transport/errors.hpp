#pragma once

#include <stdexcept>
#include <string>

namespace toll {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs outside an operation's domain (bad grids, supports, parameters).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The constraint set is empty. `deficit` is the missing cap mass when the
/// failure comes from the rate pre-check, otherwise the phase-1 residual.
class Infeasible : public Error {
 public:
  Infeasible(const std::string& what, double deficit)
      : Error(what), deficit_(deficit) {}
  double deficit() const { return deficit_; }

 private:
  double deficit_;
};

class IterationLimit : public Error {
 public:
  using Error::Error;
};

/// A marginal vanished on a node where the target carries mass.
class SupportMismatch : public Error {
 public:
  using Error::Error;
};

/// The Gibbs kernel or a scaling left the representable range.
class NumericalUnderflow : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class IOError : public Error {
 public:
  using Error::Error;
};

}  // namespace toll
