#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stbp {

// Base class for every error raised by the library. Each subclass maps onto
// one failure category so callers (and the CLI exit-code mapping) can react
// without parsing messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or parameter shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked on an object in the wrong lifecycle state
// (missing cache, unpopulated running statistics, already-fused network).
class StateError : public Error {
 public:
  using Error::Error;
};

// Invalid hyper-parameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed network graph: cycles, dangling edges, untagged junction branches.
class GraphError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (event coordinates out of range, bad labels, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Incorrect command usage (wrong arguments, rejected operation).
class UsageError : public Error {
 public:
  using Error::Error;
};

// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Binary file could not be decoded; carries the byte offset of the failure.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        detail_(what), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }
  // Message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

}  // namespace stbp
