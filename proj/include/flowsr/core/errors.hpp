#pragma once

#include <stdexcept>
#include <string>

namespace flowsr {

// Rejected inputs: shape mismatches, out-of-domain values, bad preconditions.
struct InputError : std::invalid_argument {
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Checkpoint load/save failures, including architecture mismatches.
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent comparator outcomes or malformed annotation groups.
struct AnnotationError : std::runtime_error {
  explicit AnnotationError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration files or keys.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or diverged state inside a training/sampling loop.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flowsr
