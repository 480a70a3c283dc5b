#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace affreal {

enum class ErrorKind {
  ZeroComponent,
  InfiniteVariance,
  BadProbabilities,
  MomentExplosion,
  ParseError,
  UnsupportedOperator,
  BracketFailure,
  DomainError,
  GridTooSmall,
  NotInvariant,
  SigmaEscapesV,
  DriftConditionFails,
  NotQuasiExponential,
  MethodUnsupported,
  TruncationTailTooLarge,
  SchemeUnsupported,
  GridMismatch,
  UnstableConfig,
  LinearSolveFailure,
  ConfigError,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so that
// callers (CLI exit codes, tests) can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace affreal
