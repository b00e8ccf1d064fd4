#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace impactlab {

// Argument outside the domain of a closed-form quantity (negative phi,
// non-positive duration, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid configuration: simulator config, grid, run config, CLI flags.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input data. Carries the 1-based file row (header is row 1) and
// the offending column when known.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t row = 0, std::string column = {})
      : std::runtime_error(what), row_(row), column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

// Header missing or not matching the documented columns.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

// Numerical procedure did not meet its target (optimizer budget, quadrature
// error bound).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace impactlab
