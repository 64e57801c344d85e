#pragma once

#include <stdexcept>
#include <string>

namespace lamar {

enum class ErrorCode {
  kShapeMismatch,
  kInvalidArgument,
  kZeroNorm,
  kNonDeterministic,
  kMissingGradient,
  kIo,
  kVersionMismatch,
  kTruncated,
  kChecksum,
  kDimMismatch,
  kCountMismatch,
  kInvariant,
  kUnsupported,
  kClient,
  kEmpty,
};

const char* to_string(ErrorCode code);

// Every failure surfaced by the engine carries a machine-readable code plus a
// single-line message of the form "<where>: <what>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lamar
