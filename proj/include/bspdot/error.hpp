#pragma once

#include <stdexcept>
#include <string>

namespace bspdot {

enum class ErrorCode {
  InvalidInput,
  NotPositiveDefinite,
  ProjectionFailed,
  NotConverged,
  FeasibilityUnknown,
  InfeasibleStart,
  InnerSolveFailed,
  StalledAtBoundary,
};

const char* to_string(ErrorCode code);

// All library failures are reported through this exception type; the C API
// translates the code into its integer status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, std::string(to_string(code)) + ": " + what);
}

}  // namespace bspdot
