#include "poda/error.hpp"

namespace poda {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnreadablePath: return "UnreadablePath";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::DanglingOrigin: return "DanglingOrigin";
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::MalformedPremiseList: return "MalformedPremiseList";
    case ErrorCode::MalformedRelation: return "MalformedRelation";
    case ErrorCode::PathCountMismatch: return "PathCountMismatch";
    case ErrorCode::DanglingPremiseRef: return "DanglingPremiseRef";
    case ErrorCode::NoFinalAnswer: return "NoFinalAnswer";
    case ErrorCode::AmbiguousFinalAnswer: return "AmbiguousFinalAnswer";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::BackendUnreachable: return "BackendUnreachable";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::ReplayMiss: return "ReplayMiss";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::InvalidExemplars: return "InvalidExemplars";
    case ErrorCode::PayloadMismatch: return "PayloadMismatch";
    case ErrorCode::UnparseableScore: return "UnparseableScore";
    case ErrorCode::InvalidOverride: return "InvalidOverride";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::NonpositiveTau: return "NonpositiveTau";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::OptionSetMismatch: return "OptionSetMismatch";
    case ErrorCode::NonfiniteValue: return "NonfiniteValue";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

bool is_backend_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::RateLimited:
    case ErrorCode::BackendUnreachable:
    case ErrorCode::BackendError:
    case ErrorCode::ReplayMiss:
    case ErrorCode::AuthMissing:
      return true;
    default:
      return false;
  }
}

bool is_rationale_parse_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingSection:
    case ErrorCode::MalformedPremiseList:
    case ErrorCode::MalformedRelation:
    case ErrorCode::PathCountMismatch:
    case ErrorCode::DanglingPremiseRef:
    case ErrorCode::NoFinalAnswer:
    case ErrorCode::AmbiguousFinalAnswer:
      return true;
    default:
      return false;
  }
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace poda
