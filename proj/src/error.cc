#include "lerg/error.h"

namespace lerg {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kReferenceUnderflow: return "ReferenceUnderflow";
    case ErrorCode::kRemoteUnavailable: return "RemoteUnavailable";
    case ErrorCode::kModelProtocolError: return "ModelProtocolError";
    case ErrorCode::kScoreDomainError: return "ScoreDomainError";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kValidationError: return "ValidationError";
    case ErrorCode::kEmptyFile: return "EmptyFile";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kTooLarge:
    case ErrorCode::kSingularSystem:
    case ErrorCode::kIoError:
      return 2;
    case ErrorCode::kRemoteUnavailable:
    case ErrorCode::kModelProtocolError:
      return 3;
    default:
      return 1;
  }
}

}  // namespace lerg
