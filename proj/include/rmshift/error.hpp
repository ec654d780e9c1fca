#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rmshift {

enum class ErrorCode {
  kMissingField,
  kDuplicateId,
  kInvalidLabel,
  kEmptyText,
  kEmptyDataset,
  kMalformedLine,
  kMissingScore,
  kNonFiniteLogit,
  kEmptyVocabulary,
  kInvalidProbability,
  kScoreLookupMiss,
  kTransportError,
  kInvalidBinCount,
  kEmptySet,
  kInvalidTarget,
  kNonFiniteScore,
  kMissingCell,
  kIdMisalignment,
  kInvalidConfig,
  kIoError,
  kPartialRun,
};

std::string_view ErrorCodeName(ErrorCode code);

// All library failures surface as this exception. The code is what callers
// branch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kInvalidLabel: return "InvalidLabel";
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kMissingScore: return "MissingScore";
    case ErrorCode::kNonFiniteLogit: return "NonFiniteLogit";
    case ErrorCode::kEmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::kInvalidProbability: return "InvalidProbability";
    case ErrorCode::kScoreLookupMiss: return "ScoreLookupMiss";
    case ErrorCode::kTransportError: return "TransportError";
    case ErrorCode::kInvalidBinCount: return "InvalidBinCount";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kInvalidTarget: return "InvalidTarget";
    case ErrorCode::kNonFiniteScore: return "NonFiniteScore";
    case ErrorCode::kMissingCell: return "MissingCell";
    case ErrorCode::kIdMisalignment: return "IdMisalignment";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kPartialRun: return "PartialRun";
  }
  return "Unknown";
}

}  // namespace rmshift
