#pragma once

#include <stdexcept>
#include <string>

namespace trec {

// Stable error identities. The CLI maps these one-to-one onto exit codes,
// so values must not be reordered.
enum class ErrorCode {
  kInvalidArgument = 1,
  kIoError,
  kInvalidDataset,
  kNonInvertibleDistortion,
  kDegenerateGeometry,
  kInsufficientMatches,
  kNonConvergence,
  kGaugeDeficiency,
  kRankDeficiency,
  kGeoreferenceFailure,
  kCoverageGap,
  kNoOverlap,
  kOutOfRange,
  kInvalidScene,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace trec
