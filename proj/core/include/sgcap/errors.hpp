#pragma once

#include <stdexcept>

namespace sgcap {

/// Invalid configuration or user input; the CLI maps it to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace sgcap
