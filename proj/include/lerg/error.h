#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lerg {

enum class ErrorCode {
  kEmptyText,
  kDegenerateInput,
  kDomainError,
  kTooLarge,
  kSingularSystem,
  kReferenceUnderflow,
  kRemoteUnavailable,
  kModelProtocolError,
  kScoreDomainError,
  kEmptyCorpus,
  kParseError,
  kValidationError,
  kEmptyFile,
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

// CLI exit status for an error: 1 validation, 2 resource/cap, 3 transport.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lerg
