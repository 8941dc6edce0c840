#pragma once

#include <stdexcept>
#include <string>

namespace vad {

// Exit codes shared by the CLI and the error types below.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitFormat = 2,
  kExitNumeric = 3,
};

// Invalid configuration or arguments supplied by the user. Messages name the
// offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or truncated on-disk data. Carries a byte offset when one is known.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg, long long byte_offset = -1)
      : std::runtime_error(byte_offset >= 0
                               ? msg + " (byte offset " + std::to_string(byte_offset) + ")"
                               : msg),
        offset_(byte_offset) {}
  long long byte_offset() const { return offset_; }

 private:
  long long offset_;
};

// Tensor/feature shape mismatches; messages name expected and actual shapes.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (diverged training etc.).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vad
