// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace carat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad shapes, out-of-range values, contract violations by the caller.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced or consumed by a numeric routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Normalizing a vector whose norm is at or below the degeneracy threshold.
class DegenerateVectorError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Invalid configuration. `field()` holds the dotted key that failed.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed dataset or checkpoint file. `record()` is the 1-based line or entry.
class FormatError : public Error {
 public:
  FormatError(std::size_t record, const std::string& what)
      : Error("record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

/// Checkpoint content that does not fit the model being restored.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

class GradCheckFailure : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace carat
