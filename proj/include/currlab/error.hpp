// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace currlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input rejected because shapes or lengths do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range argument (configs, schedules, datasets).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Optimizer received a non-finite gradient; the step was not applied.
class PoisonedStateError : public Error {
 public:
  using Error::Error;
};

/// Graph operation that cannot be honoured (non-scalar root, unsupported op).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Statistic is undefined for the given data (e.g. zero variance).
class UndefinedStatistic : public Error {
 public:
  using Error::Error;
};

/// Request exceeds a configured resource guard (e.g. unroll memory).
class ResourceLimitError : public Error {
 public:
  using Error::Error;
};

/// Parse failure in an input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace currlab
