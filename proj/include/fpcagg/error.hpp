#pragma once

#include <stdexcept>
#include <string>

namespace fpcagg {

enum class ErrorCode {
  Schema,
  Parse,
  DuplicateObservation,
  InsufficientObservations,
  LabelMissing,
  InsufficientData,
  SmoothingFailure,
  CovarianceInestimable,
  DegenerateCovariance,
  Extrapolation,
  Numerical,
  DegenerateLabels,
  Shape,
  Domain,
  Config,
  Io,
  ReplicaFailure,
  ExperimentFailure,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Schema: return "schema error";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::DuplicateObservation: return "duplicate observation";
    case ErrorCode::InsufficientObservations: return "insufficient observations";
    case ErrorCode::LabelMissing: return "label missing";
    case ErrorCode::InsufficientData: return "insufficient data";
    case ErrorCode::SmoothingFailure: return "smoothing failure";
    case ErrorCode::CovarianceInestimable: return "covariance inestimable";
    case ErrorCode::DegenerateCovariance: return "degenerate covariance";
    case ErrorCode::Extrapolation: return "extrapolation";
    case ErrorCode::Numerical: return "numerical error";
    case ErrorCode::DegenerateLabels: return "degenerate labels";
    case ErrorCode::Shape: return "shape mismatch";
    case ErrorCode::Domain: return "domain error";
    case ErrorCode::Config: return "config error";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::ReplicaFailure: return "replica failure";
    case ErrorCode::ExperimentFailure: return "experiment failure";
  }
  return "unknown error";
}

// All library failures are reported through this type; code() identifies the
// contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fpcagg
