#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace acsel {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidParameters : public Error {
 public:
  using Error::Error;
};

/// A recursion produced an infinite or NaN value at `index`.
class NonFiniteValue : public Error {
 public:
  NonFiniteValue(const std::string& what, std::size_t index)
      : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  [[nodiscard]] std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class DegenerateSeries : public Error {
 public:
  using Error::Error;
};

class DegenerateResiduals : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  SingularMatrix(const std::string& what, double condition)
      : Error(what + " (condition number " + std::to_string(condition) + ")"),
        condition_(condition) {}
  [[nodiscard]] double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class EstimationFailed : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration or input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace acsel
