#pragma once

#include <stdexcept>
#include <string>

namespace vidpoint {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kDegenerateInput,
  kEmptyInput,
  kMissingArtifact,
  kIoError,
  kCorruptHeader,
  kCorruptTruncated,
  kCorruptHash,
  kUnsupportedVersion,
  kNumerical,
};

/// Exception carrying a machine-readable code and the pipeline stage or
/// file context the failure originated from.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string context = {})
      : std::runtime_error(context.empty() ? message
                                           : context + ": " + message),
        code_(code),
        context_(std::move(context)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& context() const noexcept { return context_; }

 private:
  ErrorCode code_;
  std::string context_;
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kDegenerateInput: return "degenerate_input";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kMissingArtifact: return "missing_artifact";
    case ErrorCode::kIoError: return "io_error";
    case ErrorCode::kCorruptHeader: return "corrupt_header";
    case ErrorCode::kCorruptTruncated: return "corrupt_truncated";
    case ErrorCode::kCorruptHash: return "corrupt_hash";
    case ErrorCode::kUnsupportedVersion: return "unsupported_version";
    case ErrorCode::kNumerical: return "numerical";
  }
  return "unknown";
}

}  // namespace vidpoint
