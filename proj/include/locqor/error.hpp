// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace locqor {

/// Base of every error the pipeline raises. Callers that only need a message
/// catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input text is not valid UTF-8.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t byte_offset)
      : Error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Structural problem in Verilog-like source (unbalanced module, open comment).
class SourceError : public Error {
 public:
  SourceError(const std::string& what, int line) : Error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Malformed or inconsistent label / dataset input.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// The embedding provider failed or returned something unusable.
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown during training (NaN/Inf loss and similar).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Model bundle cannot be read, or fails verification.
class BundleError : public Error {
 public:
  using Error::Error;
};

}  // namespace locqor
