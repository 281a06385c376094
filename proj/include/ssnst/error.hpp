#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ssnst {

enum class ErrorCode {
  // network
  CycleDetected,
  MultipleOutlets,
  DanglingReference,
  InvalidNetwork,
  NonPositiveWeight,
  AfvMissing,
  MissingNetwork,
  // kernels / linear algebra
  InvalidForm,
  DimensionMismatch,
  NotPositiveDefinite,
  // temporal
  UnstablePhi,
  NoConvergence,
  NonStationaryPhi,
  DenseCapExceeded,
  // model
  UnknownColumn,
  UnsupportedCase,
  // sampler
  ConfigInvalid,
  InsufficientDraws,
  // predictor
  CovariateMissing,
  Case2aUnsupported,
  SampleTooSmall,
  // metrics
  EmptyHoldout,
  TooFewDraws,
  // workbench
  ParseError,
  SchemaError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code.
/// Numerical failures (non-PD covariance, unstable transition matrix,
/// non-convergence) are distinguished from input validation failures so
/// that the CLI can map them to different exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  bool is_numerical() const noexcept;

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace ssnst
