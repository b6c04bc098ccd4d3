#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace safcov {

/// Base class for every domain error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// The r x r system inside a low-rank update (Woodbury, GLS) could not be solved.
class SingularInnerSystem : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class InsufficientDimensions : public Error {
 public:
  using Error::Error;
};

class NumericalBreakdown : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  using Error::Error;
};

class EigenFailure : public Error {
 public:
  EigenFailure(const std::string& what, int iterations)
      : Error(what + " (iteration budget " + std::to_string(iterations) + ")"),
        iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

/// CSV problems carry a 1-based row (line) and column location.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what + " at row " + std::to_string(row) + ", column " +
              std::to_string(column)),
        row_(row),
        column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class NonNumericCell : public ParseError {
 public:
  using ParseError::ParseError;
};

class DuplicateDate : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace safcov
