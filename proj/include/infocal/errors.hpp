#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace infocal {

/// Raised when a caller breaks a documented precondition (bad shapes, ids out
/// of range, non-positive temperature, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A non-finite value appeared in a forward value or a gradient. `where()`
/// names the primitive or loss component that produced it.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(std::string where, const std::string& what)
      : std::runtime_error(what + " [" + where + "]"), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void expects(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}

inline void expects(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace infocal
