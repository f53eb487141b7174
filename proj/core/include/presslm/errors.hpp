#pragma once

#include <stdexcept>
#include <string>

namespace presslm {

/// Base class for all presslm errors. CLI maps these to exit code 1,
/// usage/missing-input problems to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes disagree (message names both shapes).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (rates, ranks, dimensions, out-of-bounds specs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite inputs where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input streams: ragged CSV rows, bad magic, broken JSON lines.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input with unusable content (empty KB, empty loss mask).
class DataError : public Error {
 public:
  using Error::Error;
};

// Sequence length violations; message carries the offending counts.
class LengthError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Dataset pipeline failure after bounded retries; carries partial provenance.
class PipelineError : public Error {
 public:
  using Error::Error;
};

}  // namespace presslm
