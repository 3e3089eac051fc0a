#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mr2ct/diffusion.hpp"
#include "mr2ct/phantom.hpp"
#include "mr2ct/registration.hpp"
#include "mr2ct/segmentation.hpp"

namespace mr2ct {

using Path = std::filesystem::path;

struct PhantomSection {
  PhantomConfig shape;        // seed comes from the top-level seed
  double rotation_deg = 0.0;  // CT misalignment about `rotation_axis` through the volume centre
  Vec3 rotation_axis{0, 0, 1};
  Vec3 translation{0, 0, 0};   // mm
  double landmark_noise_mm = 0.0;  // simulated picking error on the MR landmarks
  Path output_dir = "phantom";
};

struct RegisterSection {
  RegistrationMode mode = RegistrationMode::kTwoPoint;
  Path mr;             // fixed image, defines the output grid
  Path mr_landmarks;   // landmark file
  Path ct;             // moving image (HU)
  Path ct_labels;      // vertebra labels on the CT grid
  Path ct_subregions;  // optional
  Path ct_landmarks;   // optional; replaces extraction from labels
  Path output_dir = "registered";
};

struct SegmentSection {
  Path ct;
  ThresholdParams params;
  bool exclude = false;
  ExclusionRules exclusion;
  Path output_dir = "segmented";
};

enum class Recipe { k2D, k3D };

struct DenoiserSection {
  std::string name = "single-target";  // single-target | gaussian | zero | external
  Path target;                         // single-target: CT (HU) on the MR grid
  Path predictions_dir;                // external
  diffusion::Prediction mode = diffusion::Prediction::kNoise;
  double prior_mean = 0.0;             // gaussian
  double prior_variance = 1.0;
};

struct TranslateSection {
  Path mr;
  Path output = "synth_ct.nii.gz";
  Recipe recipe = Recipe::k2D;
  DenoiserSection denoiser;
  diffusion::SamplerConfig sampler;
  int T = 1000;
  double s = 0.008;
  int tile = 256;
  Index3 patch{64, 64, 64};
  Index3 stride{0, 0, 0};  // 0 means equal to patch
  double iso_spacing = 1.0;
};

struct EvalCase {
  std::string id;
  Path reference_ct;  // HU
  Path labels;
  Path subregions;    // optional
  std::map<std::string, Path> methods;
};

struct EvaluateSection {
  std::vector<EvalCase> cases;
  double mask_radius = 10.0;
  int crop = 256;
  ExclusionRules exclusion;
  Path output_dir = "evaluation";
};

struct AblateSection {
  std::vector<int> steps{10, 20, 50};
  std::vector<double> eta{0.0, 1.0};
  std::vector<double> w{0.0, 1.0, 2.0};
  EvalCase reference;  // methods unused
  Path output_dir = "ablation";
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  PhantomSection phantom;
  RegisterSection reg;
  SegmentSection segment;
  TranslateSection translate;
  EvaluateSection evaluate;
  AblateSection ablate;
};

struct ConfigSources {
  std::optional<Path> file;
  std::vector<std::string> overrides;  // "dotted.key=value"; value parsed as YAML
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

// Parses and validates structure, ranges and enum values. Unknown keys and a
// missing seed are validation errors. Paths are not checked here.
PipelineConfig load_config(const ConfigSources& sources);

// Same, from YAML text (overrides still applied).
PipelineConfig parse_config(const std::string& yaml_text, const ConfigSources& sources = {});

const char* recipe_name(Recipe recipe);

}  // namespace mr2ct
