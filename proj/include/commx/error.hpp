#pragma once

#include <stdexcept>
#include <string>

namespace commx {

// Error categories. The CLI maps each to a distinct exit code.
enum class ErrorKind {
  Dimension,
  Numeric,
  Contract,
  Config,
  Domain,
  Format,
  Label,
  Data,
  Alignment,
  Metric,
  Fingerprint,
  Conflict,
  Validation,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace commx
