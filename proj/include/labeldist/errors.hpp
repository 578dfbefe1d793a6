#pragma once

#include <stdexcept>
#include <string>

namespace labeldist {

/// Argument outside the mathematical domain of a function (e.g. lgamma(0)).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A moment that does not exist was requested (t-distribution with nu <= 2).
class UndefinedMomentError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Tensor shapes do not agree for an operator.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value. Surfaces as exit code 2 in the CLI.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (CSV files, datasets). Exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite value. Exit code 3.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string component, const std::string& what)
      : std::runtime_error(what), component_(std::move(component)) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

}  // namespace labeldist
