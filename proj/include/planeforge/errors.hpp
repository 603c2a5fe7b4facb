#pragma once

#include <stdexcept>
#include <string>

namespace pf {

// Invalid run configuration or malformed input file. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered during optimization. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// No direction cleared the periodicity threshold. CLI exit code 4; callers
// may fall back to a manually supplied lattice.
class NoPeriodicityFound : public std::runtime_error {
 public:
  explicit NoPeriodicityFound(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pf
