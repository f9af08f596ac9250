#include "recycle/error.hpp"

namespace recycle {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kUnknownTokenizer: return "UnknownTokenizer";
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kDivergedTraining: return "DivergedTraining";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kEmptyDocument: return "EmptyDocument";
    case ErrorCode::kMissingImprovedTags: return "MissingImprovedTags";
    case ErrorCode::kEndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::kPerDocFailure: return "PerDocFailure";
    case ErrorCode::kBudgetExceeded: return "BudgetExceeded";
    case ErrorCode::kEmptySource: return "EmptySource";
    case ErrorCode::kZeroWeightAll: return "ZeroWeightAll";
    case ErrorCode::kCapViolated: return "CapViolated";
    case ErrorCode::kEmptyReference: return "EmptyReference";
    case ErrorCode::kTooFewPairs: return "TooFewPairs";
    case ErrorCode::kDegenerateVariance: return "DegenerateVariance";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kProviderFailure: return "ProviderFailure";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kSampleTooLarge: return "SampleTooLarge";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kStageFailed: return "StageFailed";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace recycle
