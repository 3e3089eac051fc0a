#pragma once

#include <stdexcept>
#include <string>

namespace mr2ct {

// Error categories surfaced by the library. Each maps to a stable
// kebab-case name used in CLI error JSON.
enum class Errc {
  kBadMagic,
  kUnsupportedDatatype,
  kTruncatedPayload,
  kDimMismatch,
  kIoFailure,
  kWrongIntensitySpace,
  kAllZeroVolume,
  kDegenerateSpacing,
  kGeometryMismatch,
  kWindowOutOfBounds,
  kPatchTooLarge,
  kInvalidConfig,
  kEmptyLabel,
  kTooFewPoints,
  kMissingSpinous,
  kInvalidTransform,
  kNotNormalized,
  kInvalidSchedule,
  kShapeMismatch,
  kZeroAlphaBar,
  kStepOutOfRange,
  kUnconditionedUnsupported,
  kEmptyBoneMask,
  kImageTooSmall,
  kLengthMismatch,
  kTooFewSamples,
  kEmptyList,
  kInvalidArgument,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }
  const char* name() const noexcept { return errc_name(code_); }

 private:
  Errc code_;
};

// Raised when user-supplied configuration is rejected before any work runs.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what, Errc code = Errc::kInvalidConfig)
      : Error(code, what) {}
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace mr2ct
