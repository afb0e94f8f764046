#pragma once

#include <stdexcept>
#include <string>

namespace lpcsm {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kMissingParameter,
  kConfig,
  kNumeric,
  kIo,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kConfigMismatch,
  kState,
};

const char* error_code_name(ErrorCode code) noexcept;

// All library failures are reported as lpcsm::Error. The C API maps the code
// onto its status enum; the CLI maps it onto a process exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace lpcsm
