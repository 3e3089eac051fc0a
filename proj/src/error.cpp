#include "mr2ct/error.hpp"

namespace mr2ct {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kBadMagic: return "bad-magic";
    case Errc::kUnsupportedDatatype: return "unsupported-datatype";
    case Errc::kTruncatedPayload: return "truncated-payload";
    case Errc::kDimMismatch: return "dim-mismatch";
    case Errc::kIoFailure: return "io-failure";
    case Errc::kWrongIntensitySpace: return "wrong-intensity-space";
    case Errc::kAllZeroVolume: return "all-zero-volume";
    case Errc::kDegenerateSpacing: return "degenerate-spacing";
    case Errc::kGeometryMismatch: return "geometry-mismatch";
    case Errc::kWindowOutOfBounds: return "window-out-of-bounds";
    case Errc::kPatchTooLarge: return "patch-too-large";
    case Errc::kInvalidConfig: return "invalid-config";
    case Errc::kEmptyLabel: return "empty-label";
    case Errc::kTooFewPoints: return "too-few-points";
    case Errc::kMissingSpinous: return "missing-spinous";
    case Errc::kInvalidTransform: return "invalid-transform";
    case Errc::kNotNormalized: return "not-normalized";
    case Errc::kInvalidSchedule: return "invalid-schedule";
    case Errc::kShapeMismatch: return "shape-mismatch";
    case Errc::kZeroAlphaBar: return "zero-alpha-bar";
    case Errc::kStepOutOfRange: return "step-out-of-range";
    case Errc::kUnconditionedUnsupported: return "unconditioned-unsupported";
    case Errc::kEmptyBoneMask: return "empty-bone-mask";
    case Errc::kImageTooSmall: return "image-too-small";
    case Errc::kLengthMismatch: return "length-mismatch";
    case Errc::kTooFewSamples: return "too-few-samples";
    case Errc::kEmptyList: return "empty-list";
    case Errc::kInvalidArgument: return "invalid-argument";
  }
  return "unknown";
}

}  // namespace mr2ct
