#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include "mr2ct/volume.hpp"

namespace mr2ct {

struct Segmentation {
  LabelVolume labels;      // vertebra ids 1..K, ascending along axis 2
  LabelVolume subregions;  // kBody / kPosterior inside each vertebra
};

// CT in, labels and subregions out on the same grid.
using Segmenter = std::function<Segmentation(const Volume&)>;

struct ThresholdParams {
  double threshold = 0.3;            // normalized intensity (about 300 HU)
  std::size_t min_component = 100;   // voxels
  double opening_radius_mm = 6.0;    // removes thin posterior structures to find the body
};

// Bone = voxels above threshold; 26-connected components of at least
// `min_component` voxels become vertebrae. Each vertebra is split by a plane
// normal to axis 1: the largest blob surviving a morphological opening is the
// body, voxels beyond its highest axis-1 index are posterior. Accepts HU or
// normalized CT.
Segmentation threshold_segment(const Volume& ct, const ThresholdParams& params = {});

// 26-connected components of a binary mask, labeled 1..K by first visit in
// memory order. Returns K.
int connected_components(const std::vector<std::uint8_t>& mask, const Index3& dims,
                         std::vector<std::int32_t>& components);

struct ExclusionRules {
  std::set<std::int32_t> sacrum_labels;
  // A label touching a boundary face is dropped when the share of its expected
  // extent along that axis missing from the volume is at least this fraction.
  // The expected extent is the median extent of labels not touching that axis.
  double max_clipped_fraction = 0.5;
};

struct Exclusion {
  LabelVolume labels;
  std::vector<std::int32_t> excluded;
};

Exclusion exclude_unsupported(const LabelVolume& labels, const ExclusionRules& rules);

}  // namespace mr2ct
