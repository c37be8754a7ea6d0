#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace l2copy {

/// Incompatible tensor shapes (matmul inner dims, broadcast, non-scalar loss).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/inf where a finite value is required.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class LengthError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent or invalid configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace l2copy
