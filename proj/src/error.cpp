#include "trec/error.hpp"

namespace trec {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "invalid-argument";
    case ErrorCode::kIoError:
      return "io-error";
    case ErrorCode::kInvalidDataset:
      return "invalid-dataset";
    case ErrorCode::kNonInvertibleDistortion:
      return "non-invertible-distortion";
    case ErrorCode::kDegenerateGeometry:
      return "degenerate-geometry";
    case ErrorCode::kInsufficientMatches:
      return "insufficient-matches";
    case ErrorCode::kNonConvergence:
      return "non-convergence";
    case ErrorCode::kGaugeDeficiency:
      return "gauge-deficiency";
    case ErrorCode::kRankDeficiency:
      return "rank-deficiency";
    case ErrorCode::kGeoreferenceFailure:
      return "georeference-failure";
    case ErrorCode::kCoverageGap:
      return "coverage-gap";
    case ErrorCode::kNoOverlap:
      return "no-overlap";
    case ErrorCode::kOutOfRange:
      return "out-of-range";
    case ErrorCode::kInvalidScene:
      return "invalid-scene";
  }
  return "unknown";
}

}  // namespace trec
