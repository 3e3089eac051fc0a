#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mr2ct/random.hpp"
#include "mr2ct/volume.hpp"

namespace mr2ct {

struct DeformSpec {
  Index3 control_grid{4, 4, 4};
  double sigma = 4.0;  // mm, std-dev of control-point displacements
  std::uint64_t seed = 0;

  void validate() const;
};

// Dense displacement (world mm) per voxel, one grid per component. The field
// is sigma times a unit field that depends only on (grid, seed, dims).
std::array<Grid3<float>, 3> displacement_field(const Geometry& geometry, const DeformSpec& spec);

struct Deformed {
  std::vector<Volume> volumes;
  std::vector<LabelVolume> labels;
};

// Applies one random smooth field identically to every input:
// out(p) = in(p + d(p)). Scalars trilinear, labels nearest.
Deformed elastic_deform(const std::vector<Volume>& volumes, const std::vector<LabelVolume>& labels,
                        const DeformSpec& spec);

struct JitterDraw {
  double contrast = 1.0;    // a
  double brightness = 0.0;  // b
};

JitterDraw draw_jitter(double brightness, double contrast, Rng& rng);

// out = clamp(a (in - mean) + mean + b, -1, 1)
Image2D apply_jitter(const Image2D& image, const JitterDraw& draw);
Volume apply_jitter(const Volume& volume, const JitterDraw& draw);

Image2D intensity_jitter(const Image2D& image, std::uint64_t seed, double brightness = 0.2,
                         double contrast = 0.2);
Volume intensity_jitter(const Volume& volume, std::uint64_t seed, double brightness = 0.2,
                        double contrast = 0.2);

}  // namespace mr2ct
