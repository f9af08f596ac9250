#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace recycle {

enum class ErrorCode {
  kInvalidArgument,
  kIoFailure,
  kMalformedRecord,
  kEmptyCorpus,
  kUnknownTokenizer,
  kEmptyClass,
  kDivergedTraining,
  kEmptyInput,
  kEmptyDocument,
  kMissingImprovedTags,
  kEndpointUnreachable,
  kPerDocFailure,
  kBudgetExceeded,
  kEmptySource,
  kZeroWeightAll,
  kCapViolated,
  kEmptyReference,
  kTooFewPairs,
  kDegenerateVariance,
  kDimensionMismatch,
  kProviderFailure,
  kTooFewSamples,
  kSampleTooLarge,
  kConfigInvalid,
  kStageFailed,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure surfaced by the library is an Error carrying a code that
// callers (and tests) can branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace recycle
