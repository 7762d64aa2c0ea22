// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splatloc {

using Scalar = double;

/// Base of every error raised by the library. The CLI maps these to exit
/// code 1; localization failure is reported through result types instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};
class ArgumentError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class StateError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class DegenerateConfigError : public Error {
 public:
  using Error::Error;
};
class NoConsensusError : public Error {
 public:
  using Error::Error;
};
/// Raised when a training step produces a non-finite loss.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Global cap on worker threads used by parallel loops (renderer tiles).
/// Results never depend on this value.
void set_max_threads(std::size_t n);
std::size_t max_threads();

}  // namespace splatloc
