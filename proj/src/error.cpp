#include "ssnst/error.hpp"

namespace ssnst {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::MultipleOutlets: return "MultipleOutlets";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::InvalidNetwork: return "InvalidNetwork";
    case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::AfvMissing: return "AfvMissing";
    case ErrorCode::MissingNetwork: return "MissingNetwork";
    case ErrorCode::InvalidForm: return "InvalidForm";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::UnstablePhi: return "UnstablePhi";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NonStationaryPhi: return "NonStationaryPhi";
    case ErrorCode::DenseCapExceeded: return "DenseCapExceeded";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::UnsupportedCase: return "UnsupportedCase";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::InsufficientDraws: return "InsufficientDraws";
    case ErrorCode::CovariateMissing: return "CovariateMissing";
    case ErrorCode::Case2aUnsupported: return "Case2aUnsupported";
    case ErrorCode::SampleTooSmall: return "SampleTooSmall";
    case ErrorCode::EmptyHoldout: return "EmptyHoldout";
    case ErrorCode::TooFewDraws: return "TooFewDraws";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

bool Error::is_numerical() const noexcept {
  switch (code_) {
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::UnstablePhi:
    case ErrorCode::NoConvergence:
    case ErrorCode::NonStationaryPhi:
      return true;
    default:
      return false;
  }
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace ssnst
