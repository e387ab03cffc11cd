#include "camloc/error.hpp"

namespace camloc {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::UnknownCamera: return "UnknownCamera";
    case ErrorCode::UnknownKeypoint: return "UnknownKeypoint";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::InsufficientObservations: return "InsufficientObservations";
    case ErrorCode::InsufficientKeypoints: return "InsufficientKeypoints";
    case ErrorCode::NoEligibleCamera: return "NoEligibleCamera";
    case ErrorCode::SolverDiverged: return "SolverDiverged";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::GaugeFree: return "GaugeFree";
    case ErrorCode::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace camloc
