#include "affreal/error.hpp"

namespace affreal {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroComponent: return "ZeroComponent";
    case ErrorKind::InfiniteVariance: return "InfiniteVariance";
    case ErrorKind::BadProbabilities: return "BadProbabilities";
    case ErrorKind::MomentExplosion: return "MomentExplosion";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnsupportedOperator: return "UnsupportedOperator";
    case ErrorKind::BracketFailure: return "BracketFailure";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::GridTooSmall: return "GridTooSmall";
    case ErrorKind::NotInvariant: return "NotInvariant";
    case ErrorKind::SigmaEscapesV: return "SigmaEscapesV";
    case ErrorKind::DriftConditionFails: return "DriftConditionFails";
    case ErrorKind::NotQuasiExponential: return "NotQuasiExponential";
    case ErrorKind::MethodUnsupported: return "MethodUnsupported";
    case ErrorKind::TruncationTailTooLarge: return "TruncationTailTooLarge";
    case ErrorKind::SchemeUnsupported: return "SchemeUnsupported";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::UnstableConfig: return "UnstableConfig";
    case ErrorKind::LinearSolveFailure: return "LinearSolveFailure";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace affreal
