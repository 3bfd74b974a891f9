#pragma once

#include <stdexcept>
#include <string>

namespace chaingraph {

/// Base of every error thrown by the library.  The CLI maps subclasses onto
/// process exit codes, so new error kinds should derive from the closest
/// existing category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Validation family (exit code 2).
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class DegenerateNodeError : public Error {
 public:
  using Error::Error;
};

class UndefinedScaleError : public Error {
 public:
  using Error::Error;
};

class NoPairsError : public Error {
 public:
  using Error::Error;
};

// Numerical family (exit code 3).
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class BootstrapFailure : public Error {
 public:
  using Error::Error;
};

// I/O family (exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace chaingraph
