#ifndef FWER_ERRORS_HPP
#define FWER_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fwer {

// Base for every domain failure raised by the library. Argument errors that
// are plain precondition violations use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed trial design or an index that is not part of the design.
class DesignError : public Error {
 public:
  using Error::Error;
};

// A cell that a statistic divides by is empty (or too small).
class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

// Not enough observations to estimate a variance.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Integration, root finding or linear algebra failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Scenario generation could not satisfy its constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// The method does not provide what the requested operation needs.
class UnsupportedMethodError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration file or command-line value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset ingestion failure; row is 1-based and counts the header line.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t row)
      : Error(row == 0 ? what : "row " + std::to_string(row) + ": " + what),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace fwer

#endif  // FWER_ERRORS_HPP
