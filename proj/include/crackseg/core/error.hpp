#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace crackseg {

// Base error carrying a short machine-readable code (used by the CLI for its
// single-line error output).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("E_CONFIG", message) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("E_SHAPE", message) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error("E_DATA", message) {}
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& message) : Error("E_CHECKPOINT", message) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& message) : Error("E_TRAINING", message) {}
};

}  // namespace crackseg
