#pragma once

#include <stdexcept>
#include <string>

namespace scanmap {

// Invalid numeric input (non-finite coordinate, non-positive variance, ...).
class InputDomainError : public std::invalid_argument {
 public:
  explicit InputDomainError(const std::string& what) : std::invalid_argument(what) {}
};

// Configuration value outside its allowed range.
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// Two maps cannot be compared (resolution or grid alignment mismatch).
class IncompatibleMapsError : public std::runtime_error {
 public:
  explicit IncompatibleMapsError(const std::string& what) : std::runtime_error(what) {}
};

// A metric has no defined value on the given inputs (empty denominator set).
class UndefinedScoreError : public std::runtime_error {
 public:
  explicit UndefinedScoreError(const std::string& what) : std::runtime_error(what) {}
};

// File could not be read, parsed or written.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace scanmap
