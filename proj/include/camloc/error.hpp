#pragma once

#include <stdexcept>
#include <string>

namespace camloc {

enum class ErrorCode {
  InvalidArgument,
  BehindCamera,
  IndexOutOfRange,
  UnknownCamera,
  UnknownKeypoint,
  AllZeroWeights,
  InsufficientObservations,
  InsufficientKeypoints,
  NoEligibleCamera,
  SolverDiverged,
  EmptyInput,
  UnknownNode,
  GaugeFree,
  InsufficientOverlap,
  EmptyWindow,
  ConfigError,
  ParseError,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers can branch on the kind of failure without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace camloc
