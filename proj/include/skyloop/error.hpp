#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skyloop {

enum class ErrorCode {
  InvalidArgument,
  NonPositiveDepth,
  LogNearPi,
  ImageTooSmall,
  PatchOutOfBounds,
  InsufficientMatches,
  InsufficientParallax,
  DegenerateMotion,
  TooFewCorrespondences,
  Diverged,
  CheiralityFailure,
  LowParallax,
  HighReprojectionError,
  InitializationFailed,
  DegenerateGeometry,
  TooFewAssociations,
  NoAssociations,
  EmptySeries,
  DegenerateTable,
  ZeroErrorVariance,
  ZeroVariance,
  EmptyPlan,
  GenerationTimeout,
  ProviderFailure,
  IoFailure,
  ParseError,
};

std::string_view to_string(ErrorCode code);

// Every recoverable failure in the library is reported through this type; the
// code is what callers branch on, the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace skyloop
