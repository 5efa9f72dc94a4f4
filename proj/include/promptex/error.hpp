#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace promptex {

// Error categories surfaced by the library. The CLI maps these onto exit
// codes and prints `error [<kind>]: <message>`.
enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  zero_norm,
  empty_input,
  backend_failure,
  config,
  io,
  not_found,
  state,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by backend clients once retries are exhausted, and by mocks on
// invalid requests. Carries the route that failed.
class BackendError : public Error {
 public:
  BackendError(std::string route, const std::string& message)
      : Error(ErrorKind::backend_failure, route + ": " + message),
        route_(std::move(route)) {}

  const std::string& route() const noexcept { return route_; }

 private:
  std::string route_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const char* message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace promptex
