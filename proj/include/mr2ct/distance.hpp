#pragma once

#include <cstdint>
#include <vector>

#include "mr2ct/volume.hpp"

namespace mr2ct {

// Exact squared Euclidean distance transform (Felzenszwalb-Huttenlocher).
// For every voxel, the squared distance in mm^2 (scaled by `spacing`) to the
// nearest voxel with feature[n] != 0. Infinity when there are no features.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& feature,
                                               const Index3& dims, const Vec3& spacing);

// Squared pixel distance from every pixel to the nearest nonzero label.
std::vector<double> squared_distance_to_labels(const Label2D& labels);

}  // namespace mr2ct
