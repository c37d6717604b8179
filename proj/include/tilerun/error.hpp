#pragma once

#include <stdexcept>
#include <string>

namespace tilerun {

// Shape or argument violations on matrix/tile operations.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent device / run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A device cannot hold the working set of a task step because every
// resident tile is pinned.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tilerun
