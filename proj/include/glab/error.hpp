#pragma once

#include <stdexcept>
#include <string>

namespace glab {

/// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  invalid_argument,
  numeric,
  capacity,
  io,
  config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::numeric: return "numeric-error";
    case ErrorKind::capacity: return "capacity-error";
    case ErrorKind::io: return "io-error";
    case ErrorKind::config: return "config-error";
  }
  return "error";
}

[[noreturn]] inline void throw_invalid(const std::string& what) {
  throw Error(ErrorKind::invalid_argument, what);
}

[[noreturn]] inline void throw_numeric(const std::string& what) {
  throw Error(ErrorKind::numeric, what);
}

[[noreturn]] inline void throw_capacity(const std::string& what) {
  throw Error(ErrorKind::capacity, what);
}

[[noreturn]] inline void throw_io(const std::string& what) {
  throw Error(ErrorKind::io, what);
}

[[noreturn]] inline void throw_config(const std::string& what) {
  throw Error(ErrorKind::config, what);
}

}  // namespace glab
