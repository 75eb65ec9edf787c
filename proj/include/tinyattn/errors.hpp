#pragma once

#include <stdexcept>

namespace tinyattn {

// Bad or inconsistent run configuration; CLI exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem / serialization failure; CLI exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tinyattn
