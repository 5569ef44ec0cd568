#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hrl {

/// Invalid configuration value or file. `line()` is 0 when the error is not
/// tied to a config file line.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss, gradient, Q value or policy ratio during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Calling an operation outside of its contract, e.g. stepping a finished episode.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Version, Truncated, Checksum, Format, Mismatch };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace hrl
