#pragma once

#include <stdexcept>
#include <string>

namespace igcf {

// Error categories map one-to-one onto the CLI exit codes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

}  // namespace igcf
