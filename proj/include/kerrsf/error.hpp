#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kerrsf {

/// Failure category. The CLI maps each category onto its own exit code.
enum class ErrorKind {
  validation,   // bad input: parameters, files, configs
  numerical,    // solver breakdown, ambiguity, non-convergence
  scale_guard,  // problem too large for the brute-force oracle
  io,           // filesystem
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::scale_guard: return "scale_guard";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& what) {
  throw Error(ErrorKind::validation, what);
}

[[noreturn]] inline void fail_numerical(const std::string& what) {
  throw Error(ErrorKind::numerical, what);
}

}  // namespace kerrsf
