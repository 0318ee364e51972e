#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace anysleep {

// Root of every error thrown by the library. Subclasses only exist where a
// caller has a reason to catch one category and not another.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class OptimizerError : public Error {
 public:
  OptimizerError(std::string parameter, const std::string& what)
      : Error(what), parameter_(std::move(parameter)) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

// Parse failure in a binary or text file. `offset` is the byte offset for
// binary formats and the 1-based line number for text formats.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// A sample outside the physical range declared for an EDF channel.
class RangeError : public Error {
 public:
  using Error::Error;
};

class ResampleError : public Error {
 public:
  using Error::Error;
};

// A raw stage label with no entry in the harmonization table.
class MappingError : public Error {
 public:
  MappingError(std::string symbol, const std::string& what) : Error(what), symbol_(std::move(symbol)) {}
  const std::string& symbol() const noexcept { return symbol_; }

 private:
  std::string symbol_;
};

class TraceError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  AlignmentError(const std::string& what, std::size_t required_multiple)
      : Error(what), required_multiple_(required_multiple) {}
  std::size_t required_multiple() const noexcept { return required_multiple_; }

 private:
  std::size_t required_multiple_;
};

// Scoring request without anything to score (no scoreable epochs, no
// recordings, mismatched lengths).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

}  // namespace anysleep
