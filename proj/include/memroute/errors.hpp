#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace memroute {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value. The message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  DimensionError(std::size_t expected, std::size_t actual)
      : Error("embedding dimension mismatch: expected " + std::to_string(expected) +
              ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

/// Persistence failure. When a specific record line is at fault,
/// record_index() holds its 0-based position within the partition file.
class StoreError : public Error {
 public:
  explicit StoreError(const std::string& what, std::optional<std::size_t> record_index = {})
      : Error(what), record_index_(record_index) {}

  std::optional<std::size_t> record_index() const noexcept { return record_index_; }

 private:
  std::optional<std::size_t> record_index_;
};

/// Dataset file does not have the expected structure.
class DatasetError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  enum class Kind { transport, timeout, http_status, malformed, no_logprobs };

  BackendError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(BackendError::Kind kind) noexcept;

}  // namespace memroute
