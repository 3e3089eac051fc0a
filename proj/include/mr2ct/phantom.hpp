#pragma once

#include <cstdint>
#include <map>

#include "mr2ct/transform.hpp"
#include "mr2ct/volume.hpp"

namespace mr2ct {

struct PhantomConfig {
  int n_vertebrae = 5;
  double body_radius = 15.0;     // mm, in-plane radius of the ellipsoidal body
  double body_height = 20.0;     // mm, craniocaudal extent of the body
  double disc_gap = 6.0;         // mm between consecutive bodies
  double process_length = 30.0;  // mm, posterior reach behind the body
  double process_width = 8.0;    // mm, left/right width of the spinous process
  double curvature = 0.0;        // mm, amplitude of a left/right sinusoidal bend
  double noise_sigma = 5.0;      // additive Gaussian noise in native units
  double spacing = 1.0;          // mm, isotropic voxel size
  std::uint64_t seed = 0;

  void validate() const;
};

struct Phantom {
  Volume mr;               // kMRRaw
  Volume ct;               // kHU
  LabelVolume labels;      // vertebra ids 1..n, craniocaudally ascending along axis 2
  LabelVolume subregions;  // Subregion::kBody / kPosterior
};

// Tissue values.
namespace tissue {
inline constexpr float kCtAir = -1000.0f;
inline constexpr float kCtSoft = 40.0f;
inline constexpr float kCtDisc = 80.0f;
inline constexpr float kCtMarrow = 400.0f;
inline constexpr float kCtCortical = 800.0f;
inline constexpr float kMrAir = 0.0f;
inline constexpr float kMrSoft = 300.0f;
inline constexpr float kMrDisc = 700.0f;
inline constexpr float kMrMarrow = 900.0f;
inline constexpr float kMrCortical = 60.0f;
inline constexpr double kCorticalThickness = 2.0;  // mm
}  // namespace tissue

Geometry phantom_geometry(const PhantomConfig& cfg);

// World centre of vertebral body `vertebra_id` (1-based).
Vec3 phantom_body_center(const PhantomConfig& cfg, int vertebra_id);

// World centre of the spinous-process box of `vertebra_id`.
Vec3 phantom_process_center(const PhantomConfig& cfg, int vertebra_id);

Phantom generate_phantom(const PhantomConfig& cfg);

// A known rigid misalignment: a global transform plus optional per-vertebra
// perturbations (applied after the global one).
struct MisalignSpec {
  RigidTransform global;
  std::map<std::int32_t, RigidTransform> per_vertebra;
};

struct Misaligned {
  Volume ct;
  LabelVolume labels;
  LabelVolume subregions;  // empty when no subregions were given
};

// Moves anatomy by the transforms in `spec`: output(p) = input(T^-1 p).
Misaligned misalign(const Volume& ct, const LabelVolume& labels, const LabelVolume* subregions,
                    const MisalignSpec& spec);

}  // namespace mr2ct
