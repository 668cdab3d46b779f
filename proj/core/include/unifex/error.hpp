#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace unifex {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents: bad magic, truncation, unparsable manifest line.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what, std::optional<std::size_t> line = std::nullopt)
      : Error(line ? what + " (line " + std::to_string(*line) + ")" : what), line_(line) {}

  /// 1-based line number for text formats, when known.
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  std::optional<std::size_t> line_;
};

/// Well-formed input whose values violate a domain invariant (NaN, negative class id).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or option combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace unifex
