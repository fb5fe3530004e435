#pragma once

#include <stdexcept>
#include <string>

namespace unetplus {

// Base of every error raised by the library. Subclasses map onto the
// failure categories used by the CLI to pick an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

// I/O family: malformed files, unreadable paths, checkpoint mismatches.
class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : IoError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class CheckpointError : public IoError {
 public:
  CheckpointError(const std::string& what, std::string entry = {})
      : IoError(entry.empty() ? what : what + ": '" + entry + "'"), entry_(std::move(entry)) {}

  const std::string& entry() const noexcept { return entry_; }

 private:
  std::string entry_;
};

}  // namespace unetplus
