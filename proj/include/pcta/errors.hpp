#pragma once

#include <stdexcept>
#include <string>

namespace pcta {

/// Bad run configuration (unknown key, unparseable value). CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad or missing input data (dataset files, checkpoints). CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pcta
