#pragma once

#include <stdexcept>
#include <string>

namespace lowrank {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad dimensions, orderings or parameter ranges.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

/// A step produced non-finite entries.
class NumericOverflowError : public Error {
 public:
  using Error::Error;
};

/// A trajectory exceeded the divergence threshold. Carries the iteration.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long iteration)
      : Error(what), iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

/// A documented precondition (commutation, invertibility) does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace lowrank
