#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace poda {

// Every failure the library reports carries one of these codes. The CLI
// prints the code name as the machine-readable error class.
enum class ErrorCode {
  // dataset
  MalformedRecord,
  UnreadablePath,
  SchemaVersionMismatch,
  DanglingOrigin,
  // rationale parsing
  MissingSection,
  MalformedPremiseList,
  MalformedRelation,
  PathCountMismatch,
  DanglingPremiseRef,
  NoFinalAnswer,
  AmbiguousFinalAnswer,
  // completion backends
  RateLimited,
  BackendUnreachable,
  BackendError,
  ReplayMiss,
  AuthMissing,
  // prompts / eval
  InvalidExemplars,
  PayloadMismatch,
  UnparseableScore,
  InvalidOverride,
  // tpcl
  DimensionMismatch,
  ZeroNorm,
  NonpositiveTau,
  EmptySequence,
  OptionSetMismatch,
  NonfiniteValue,
  // generic
  InvalidArgument,
  ConfigError,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// True for the codes a completion or embedding backend can raise.
bool is_backend_error(ErrorCode code) noexcept;

bool is_rationale_parse_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace poda
