#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>

namespace idal {

// Error categories map onto the CLI exit-code contract:
// usage/config -> 1, numeric -> 2, I/O -> 3.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-fatal diagnostics (e.g. degenerate median bandwidth) go through a
// replaceable sink so tests can capture them.
using WarningHandler = std::function<void(const std::string&)>;

inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](const std::string& msg) {
    std::cerr << "[idal] warning: " << msg << "\n";
  };
  return handler;
}

inline void warn(const std::string& msg) { warning_handler()(msg); }

}  // namespace idal
