#include "lamar/error.hpp"

namespace lamar {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kZeroNorm: return "zero_norm";
    case ErrorCode::kNonDeterministic: return "non_deterministic";
    case ErrorCode::kMissingGradient: return "missing_gradient";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kChecksum: return "checksum";
    case ErrorCode::kDimMismatch: return "dim_mismatch";
    case ErrorCode::kCountMismatch: return "count_mismatch";
    case ErrorCode::kInvariant: return "invariant";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kClient: return "client";
    case ErrorCode::kEmpty: return "empty";
  }
  return "unknown";
}

}  // namespace lamar
