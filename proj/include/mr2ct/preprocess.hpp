#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <vector>

#include "mr2ct/random.hpp"
#include "mr2ct/volume.hpp"

namespace mr2ct {

// ---------------------------------------------------------------------------
// Intensity normalization

// HU -> [-1, 1]: clamp(hu / 1000, -1, 1).
Volume normalize_ct(const Volume& ct);

// Linear map 0 -> -1, per-volume max -> +1. Requires min >= 0 and max > 0.
Volume normalize_mr(const Volume& mr);

// Inverse of normalize_ct for writing synthesized CT back in HU.
Volume denormalize_ct(const Volume& normalized);

// ---------------------------------------------------------------------------
// Resampling

// Background value used for out-of-field samples of a given intensity space.
float default_fill(IntensitySpace space);

// Samples at a continuous voxel index; `fill` outside [0, n-1] on any axis.
float sample_trilinear(const Grid3<float>& grid, const Vec3& index, float fill);
std::int32_t sample_nearest(const Grid3<std::int32_t>& grid, const Vec3& index,
                            std::int32_t fill = 0);

// Resamples onto `target`. `target_to_source` maps target world coordinates
// to source world coordinates (identity for plain resampling). Scalars are
// trilinear, labels nearest-neighbour.
Volume resample(const Volume& source, const Geometry& target,
                const Mat4& target_to_source = Mat4::Identity(),
                std::optional<float> fill = std::nullopt);
LabelVolume resample(const LabelVolume& source, const Geometry& target,
                     const Mat4& target_to_source = Mat4::Identity());

// Grid covering the same field of view as `geometry` at `spacing`.
Geometry respaced_grid(const Geometry& geometry, const Vec3& spacing);

Volume resample_to_spacing(const Volume& source, const Vec3& spacing);
LabelVolume resample_to_spacing(const LabelVolume& source, const Vec3& spacing);

// ---------------------------------------------------------------------------
// 2D slicing and cropping

struct SagittalSlice {
  int index = 0;  // position along axis 0
  Image2D image;
  Label2D labels;
};

Image2D sagittal_image(const Volume& volume, int index);
Label2D sagittal_labels(const LabelVolume& labels, int index);
void set_sagittal_image(Volume& volume, int index, const Image2D& image);

// One pair per sagittal index whose label slice is nonempty, in index order.
std::vector<SagittalSlice> slice_sagittal(const Volume& volume, const LabelVolume& labels);

// Pads (centred) to at least `size` on each side with `pad_value`. Returns the
// position of the original content inside the padded image.
Image2D pad_to_size(const Image2D& image, int rows, int cols, float pad_value, Window2* placed);
Label2D pad_to_size(const Label2D& image, int rows, int cols, std::int32_t pad_value,
                    Window2* placed);

// Window of `rows`x`cols` drawn uniformly among valid positions of an
// image with the given shape (which must be at least that large).
Window2 random_window(int image_rows, int image_cols, int rows, int cols, Rng& rng);

Image2D crop(const Image2D& image, const Window2& window);
Label2D crop(const Label2D& image, const Window2& window);

// Zero-pads smaller inputs, then takes a uniformly random size x size window.
Image2D random_crop_2d(const Image2D& image, Rng& rng, int size = 256, float pad_value = 0.0f);

// ---------------------------------------------------------------------------
// Padding, ramps, patches, stitching

struct PadRecord {
  Index3 original{0, 0, 0};
  Index3 padded{0, 0, 0};
};

// Pads the high end of each axis by edge replication to the next multiple
// of `multiple`. Origin is unchanged.
Volume pad_to_multiple(const Volume& volume, int multiple, PadRecord* record);
Volume unpad(const Volume& volume, const PadRecord& record);

// Three channels: channel k is i_k / (N_k - 1) over the full extent
// `full_dims` (0 where N_k == 1), cropped to `window`.
std::array<Grid3<float>, 3> coordinate_ramps(const Index3& full_dims, const Window3& window);

// Patch windows of size `patch` with `stride`, last window per axis clamped to
// the boundary. Throws kPatchTooLarge when patch exceeds dims.
std::vector<Window3> patch_windows(const Index3& dims, const Index3& patch, const Index3& stride);

struct Patch3 {
  Window3 window;
  Volume volume;
};

std::vector<Patch3> patch_3d(const Volume& volume, const Index3& patch, const Index3& stride);

Volume extract_window(const Volume& volume, const Window3& window);

struct Tile2D {
  Image2D image;
  Window2 window;  // rows/cols must match the image shape
};

// Feather-blended stitching; uncovered pixels are -1.
Image2D stitch_2d(const std::vector<Tile2D>& tiles, int rows, int cols);

struct Tile3D {
  Grid3<float> values;
  Window3 window;
};

Grid3<float> stitch_3d(const std::vector<Tile3D>& tiles, const Geometry& geometry);

// Linear feather weight of position `pos` inside an extent of `size`.
inline double feather_weight(int pos, int size) {
  const int d = std::min(pos + 1, size - pos);
  return static_cast<double>(d);
}

}  // namespace mr2ct
