#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mr2ct/config.hpp"
#include "mr2ct/denoisers.hpp"
#include "mr2ct/report.hpp"

namespace mr2ct {

// Runs body(0..count-1) on up to `jobs` threads. If any calls throw, the
// exception of the lowest index is rethrown after all work stops.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body);

// ---------------------------------------------------------------------------
// Translation

struct DenoiserSpec {
  std::string name = "single-target";
  diffusion::Prediction mode = diffusion::Prediction::kNoise;
  std::optional<Volume> target;  // normalized CT on the MR grid (single-target)
  std::shared_ptr<const diffusion::PredictionStore> store;  // external
  double prior_mean = 0.0;
  double prior_variance = 1.0;
};

struct TranslateOptions {
  Recipe recipe = Recipe::k2D;
  diffusion::SamplerConfig sampler;
  int T = 1000;
  double s = 0.008;
  int tile = 256;
  Index3 patch{64, 64, 64};
  Index3 stride{0, 0, 0};
  double iso_spacing = 1.0;
  std::uint64_t seed = 0;
  int jobs = 1;
};

TranslateOptions translate_options(const PipelineConfig& cfg);

// MR (raw or normalized) in, normalized synthetic CT on the MR grid out.
// 2D: every sagittal slice is padded with -1 to at least tile x tile, tiled,
// sampled per tile and feather-stitched. 3D: resampled to isotropic spacing,
// padded to a multiple of 8, sampled per patch with the MR and three
// coordinate ramps as condition, stitched, unpadded and resampled back.
// Region k draws from stream derive_seed(seed, k).
Volume translate_volume(const Volume& mr, const DenoiserSpec& denoiser, const TranslateOptions& options);

// ---------------------------------------------------------------------------
// Evaluation

struct CaseData {
  std::string id;
  Volume reference_ct;  // HU
  LabelVolume labels;
  std::optional<LabelVolume> subregions;
  std::map<std::string, Volume> methods;  // synthesized CT in HU, same grid
};

struct EvaluationParams {
  double mask_radius = 10.0;
  int crop = 256;
  ExclusionRules exclusion;
  ThresholdParams segment;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct EvaluationResult {
  std::vector<ImageMetricRow> image_rows;
  std::vector<MethodDiceRow> dice_rows;
  std::vector<TTestRow> ttests;
  std::map<std::string, std::vector<std::int32_t>> excluded;  // per case
  std::map<std::string, std::size_t> empty_crops;              // per case, dropped
  nlohmann::json summary;
};

// Image metrics per sagittal slice with reference labels (one crop per
// slice, spine-masked, shared window across methods; crops that miss the
// mask are dropped), Dice of the threshold
// segmentation of each method against the reference labels, and paired
// t-tests between every pair of methods. SSIM uses peak 2 on [-1, 1]; VIFp
// is computed on images mapped to [0, 255].
EvaluationResult evaluate_cases(const std::vector<CaseData>& cases, const EvaluationParams& params);

// ---------------------------------------------------------------------------
// Commands. Each validates its inputs before writing anything and returns a
// JSON summary of what was written.

nlohmann::json cmd_phantom(const PipelineConfig& cfg);
nlohmann::json cmd_register(const PipelineConfig& cfg);
nlohmann::json cmd_segment(const PipelineConfig& cfg);
nlohmann::json cmd_translate(const PipelineConfig& cfg);
nlohmann::json cmd_evaluate(const PipelineConfig& cfg);
nlohmann::json cmd_ablate(const PipelineConfig& cfg);

nlohmann::json run_command(const std::string& command, const PipelineConfig& cfg);

// Command-line entry: parses arguments, runs the command, prints a one-line
// JSON summary to `out` or a one-line error JSON to `err`. Returns 0 on
// success, 2 on validation errors, 1 on runtime errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mr2ct
