#pragma once

#include <stdexcept>
#include <string>

namespace dendroweb {

// Failure categories surfaced to the CLI as distinct exit codes. Violated
// preconditions on in-memory data use std::invalid_argument instead.

/// A file could not be opened, decoded or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A JSON document is missing a field or holds an invalid value.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The pith lies outside the image or the disc mask.
class PithError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model loading or inference failed, or a backend broke its output contract.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two inputs that must share dimensions do not.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A ring set violates the non-crossing requirement.
class CrossingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dendroweb
