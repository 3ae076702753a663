// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <stdexcept>
#include <string>

namespace sde_restore {

enum class ErrorKind {
  Format,         // malformed file contents
  Unsupported,    // valid but unhandled encoding / ratio
  Io,             // open / read / write failure
  Size,           // input too short for the requested operation
  State,          // object in the wrong state (e.g. compressed twice)
  Degenerate,     // silent or otherwise degenerate input
  Parameter,      // invalid design parameter
  Infeasible,     // physically unrealizable configuration
  NumericGuard,   // evaluation would divide by a vanishing quantity
  Shape,          // array shape mismatch
  NonFinite,      // NaN / Inf encountered
  Config          // invalid or mismatched configuration
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Format: return "format error";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Size: return "size error";
    case ErrorKind::State: return "state error";
    case ErrorKind::Degenerate: return "degenerate input";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::NumericGuard: return "numeric guard";
    case ErrorKind::Shape: return "shape mismatch";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Config: return "config error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace sde_restore
