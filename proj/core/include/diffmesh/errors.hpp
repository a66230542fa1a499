#pragma once

#include <stdexcept>
#include <string>

namespace diffmesh {

// Bad configuration or arguments: wrong sizes, impossible settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatch between tensors or files.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Operation invoked in the wrong lifecycle state.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem and serialization failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace diffmesh
