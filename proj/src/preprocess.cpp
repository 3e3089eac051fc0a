#include "mr2ct/preprocess.hpp"

#include <cmath>
#include <limits>

namespace mr2ct {
namespace {

constexpr double kEdgeTol = 1e-6;

void require_space(const Volume& v, IntensitySpace expected, const char* op) {
  if (v.space() != expected) {
    fail(Errc::kWrongIntensitySpace, std::string(op) + " expects " +
                                         intensity_space_name(expected) + " input, got " +
                                         intensity_space_name(v.space()));
  }
}

// Maps target voxel index -> source voxel index.
Eigen::Matrix<double, 3, 4> index_map(const Geometry& source, const Geometry& target,
                                      const Mat4& target_to_source) {
  const Mat4 m = source.affine().inverse() * target_to_source * target.affine();
  return m.topRows<3>();
}

template <typename Grid, typename Sampler>
void fill_mapped(Grid& out, const Eigen::Matrix<double, 3, 4>& map, Sampler&& sample) {
  const Index3& d = out.dims();
  const Vec3 ax = map.col(0), ay = map.col(1), az = map.col(2), t = map.col(3);
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      Vec3 q = t + ay * j + az * k;
      std::size_t o = out.offset(0, j, k);
      for (int i = 0; i < d[0]; ++i, ++o, q += ax) out.data()[o] = sample(q);
    }
  }
}

// Axis clamp for trilinear lookup. The field spans the voxel footprints
// [-0.5, n - 0.5]; beyond the outer centres the edge value is held. Returns
// false when outside the field.
inline bool locate(double q, int n, int& i0, int& i1, double& f) {
  if (q < -0.5 - kEdgeTol || q > n - 0.5 + kEdgeTol) return false;
  q = std::clamp(q, 0.0, static_cast<double>(n - 1));
  i0 = static_cast<int>(std::floor(q));
  if (i0 >= n - 1) {
    i0 = n - 1;
    i1 = n - 1;
    f = 0.0;
  } else {
    i1 = i0 + 1;
    f = q - i0;
  }
  return true;
}

template <typename T>
Grid2<T> sagittal_of(const Grid3<T>& grid, int index) {
  if (index < 0 || index >= grid.dim(0)) {
    fail(Errc::kWindowOutOfBounds, "sagittal index out of range");
  }
  Grid2<T> img(grid.dim(2), grid.dim(1));
  for (int k = 0; k < grid.dim(2); ++k) {
    for (int j = 0; j < grid.dim(1); ++j) img(k, j) = grid(index, j, k);
  }
  return img;
}

template <typename T>
Grid2<T> pad_generic(const Grid2<T>& image, int rows, int cols, T pad_value, Window2* placed) {
  const int out_rows = std::max(rows, image.rows);
  const int out_cols = std::max(cols, image.cols);
  const int r0 = (out_rows - image.rows) / 2;
  const int c0 = (out_cols - image.cols) / 2;
  Grid2<T> out(out_rows, out_cols, pad_value);
  for (int r = 0; r < image.rows; ++r) {
    for (int c = 0; c < image.cols; ++c) out(r + r0, c + c0) = image(r, c);
  }
  if (placed != nullptr) *placed = Window2{r0, c0, image.rows, image.cols};
  return out;
}

template <typename T>
Grid2<T> crop_generic(const Grid2<T>& image, const Window2& w) {
  if (w.row < 0 || w.col < 0 || w.rows < 0 || w.cols < 0 || w.row + w.rows > image.rows ||
      w.col + w.cols > image.cols) {
    fail(Errc::kWindowOutOfBounds, "crop window outside image");
  }
  Grid2<T> out(w.rows, w.cols);
  for (int r = 0; r < w.rows; ++r) {
    for (int c = 0; c < w.cols; ++c) out(r, c) = image(w.row + r, w.col + c);
  }
  return out;
}

void check_window(const Index3& dims, const Window3& w) {
  for (int a = 0; a < 3; ++a) {
    if (w.lo[a] < 0 || w.size[a] < 1 || w.lo[a] + w.size[a] > dims[a]) {
      fail(Errc::kWindowOutOfBounds, "window outside volume on axis " + std::to_string(a));
    }
  }
}

}  // namespace

Volume normalize_ct(const Volume& ct) {
  require_space(ct, IntensitySpace::kHU, "normalize_ct");
  Volume out(ct.geometry(), IntensitySpace::kNormalized);
  for (std::size_t n = 0; n < ct.size(); ++n) {
    out.data()[n] = std::clamp(ct.data()[n] / 1000.0f, -1.0f, 1.0f);
  }
  return out;
}

Volume normalize_mr(const Volume& mr) {
  require_space(mr, IntensitySpace::kMRRaw, "normalize_mr");
  const auto [lo, hi] = std::minmax_element(mr.data().begin(), mr.data().end());
  if (lo == mr.data().end() || *hi <= 0.0f) {
    fail(Errc::kAllZeroVolume, "normalize_mr: volume maximum is not positive");
  }
  if (*lo < 0.0f) fail(Errc::kInvalidArgument, "normalize_mr: negative MR intensity");
  const double max = *hi;
  Volume out(mr.geometry(), IntensitySpace::kNormalized);
  for (std::size_t n = 0; n < mr.size(); ++n) {
    out.data()[n] = static_cast<float>(std::clamp(2.0 * mr.data()[n] / max - 1.0, -1.0, 1.0));
  }
  return out;
}

Volume denormalize_ct(const Volume& normalized) {
  require_space(normalized, IntensitySpace::kNormalized, "denormalize_ct");
  Volume out(normalized.geometry(), IntensitySpace::kHU);
  for (std::size_t n = 0; n < normalized.size(); ++n) {
    out.data()[n] = normalized.data()[n] * 1000.0f;
  }
  return out;
}

float default_fill(IntensitySpace space) {
  switch (space) {
    case IntensitySpace::kNormalized: return -1.0f;
    case IntensitySpace::kHU: return -1000.0f;
    default: return 0.0f;
  }
}

float sample_trilinear(const Grid3<float>& grid, const Vec3& q, float fill) {
  int i0, i1, j0, j1, k0, k1;
  double fx, fy, fz;
  if (!locate(q[0], grid.dim(0), i0, i1, fx) || !locate(q[1], grid.dim(1), j0, j1, fy) ||
      !locate(q[2], grid.dim(2), k0, k1, fz)) {
    return fill;
  }
  const double c00 = grid(i0, j0, k0) * (1 - fx) + grid(i1, j0, k0) * fx;
  const double c10 = grid(i0, j1, k0) * (1 - fx) + grid(i1, j1, k0) * fx;
  const double c01 = grid(i0, j0, k1) * (1 - fx) + grid(i1, j0, k1) * fx;
  const double c11 = grid(i0, j1, k1) * (1 - fx) + grid(i1, j1, k1) * fx;
  const double c0 = c00 * (1 - fy) + c10 * fy;
  const double c1 = c01 * (1 - fy) + c11 * fy;
  return static_cast<float>(c0 * (1 - fz) + c1 * fz);
}

std::int32_t sample_nearest(const Grid3<std::int32_t>& grid, const Vec3& q, std::int32_t fill) {
  int idx[3];
  for (int a = 0; a < 3; ++a) {
    if (q[a] < -0.5 - kEdgeTol || q[a] > grid.dim(a) - 0.5 + kEdgeTol) return fill;
    idx[a] = std::clamp(static_cast<int>(std::floor(q[a] + 0.5)), 0, grid.dim(a) - 1);
  }
  return grid(idx[0], idx[1], idx[2]);
}

Volume resample(const Volume& source, const Geometry& target, const Mat4& target_to_source,
                std::optional<float> fill) {
  target.validate();
  const float background = fill.value_or(default_fill(source.space()));
  Volume out(target, source.space());
  fill_mapped(out, index_map(source.geometry(), target, target_to_source),
              [&](const Vec3& q) { return sample_trilinear(source, q, background); });
  return out;
}

LabelVolume resample(const LabelVolume& source, const Geometry& target,
                     const Mat4& target_to_source) {
  target.validate();
  LabelVolume out(target, source.kind());
  fill_mapped(out, index_map(source.geometry(), target, target_to_source),
              [&](const Vec3& q) { return sample_nearest(source, q, 0); });
  return out;
}

Geometry respaced_grid(const Geometry& geometry, const Vec3& spacing) {
  for (int a = 0; a < 3; ++a) {
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      fail(Errc::kDegenerateSpacing, "target spacing must be positive and finite");
    }
  }
  Geometry g = geometry;
  Vec3 shift;
  for (int a = 0; a < 3; ++a) {
    const double extent = geometry.dims[a] * geometry.spacing[a];
    g.dims[a] = std::max(1, static_cast<int>(std::lround(extent / spacing[a])));
    g.spacing[a] = spacing[a];
    // Keep the outer field-of-view edge fixed.
    shift[a] = 0.5 * (spacing[a] - geometry.spacing[a]);
  }
  g.origin = geometry.origin + geometry.direction * shift;
  return g;
}

Volume resample_to_spacing(const Volume& source, const Vec3& spacing) {
  return resample(source, respaced_grid(source.geometry(), spacing));
}

LabelVolume resample_to_spacing(const LabelVolume& source, const Vec3& spacing) {
  return resample(source, respaced_grid(source.geometry(), spacing));
}

Image2D sagittal_image(const Volume& volume, int index) { return sagittal_of(volume, index); }

Label2D sagittal_labels(const LabelVolume& labels, int index) { return sagittal_of(labels, index); }

void set_sagittal_image(Volume& volume, int index, const Image2D& image) {
  if (image.rows != volume.dim(2) || image.cols != volume.dim(1)) {
    fail(Errc::kShapeMismatch, "sagittal image shape does not match volume");
  }
  for (int k = 0; k < volume.dim(2); ++k) {
    for (int j = 0; j < volume.dim(1); ++j) volume(index, j, k) = image(k, j);
  }
}

std::vector<SagittalSlice> slice_sagittal(const Volume& volume, const LabelVolume& labels) {
  if (!volume.geometry().same_grid(labels.geometry())) {
    fail(Errc::kGeometryMismatch, "slice_sagittal: image and labels are on different grids");
  }
  std::vector<SagittalSlice> out;
  for (int i = 0; i < volume.dim(0); ++i) {
    bool any = false;
    for (int k = 0; k < labels.dim(2) && !any; ++k) {
      for (int j = 0; j < labels.dim(1); ++j) {
        if (labels(i, j, k) != 0) {
          any = true;
          break;
        }
      }
    }
    if (any) out.push_back({i, sagittal_image(volume, i), sagittal_labels(labels, i)});
  }
  return out;
}

Image2D pad_to_size(const Image2D& image, int rows, int cols, float pad_value, Window2* placed) {
  return pad_generic(image, rows, cols, pad_value, placed);
}

Label2D pad_to_size(const Label2D& image, int rows, int cols, std::int32_t pad_value,
                    Window2* placed) {
  return pad_generic(image, rows, cols, pad_value, placed);
}

Window2 random_window(int image_rows, int image_cols, int rows, int cols, Rng& rng) {
  if (image_rows < rows || image_cols < cols) {
    fail(Errc::kWindowOutOfBounds, "random_window: image smaller than window");
  }
  std::uniform_int_distribution<int> pick_row(0, image_rows - rows);
  std::uniform_int_distribution<int> pick_col(0, image_cols - cols);
  const int r = pick_row(rng);
  const int c = pick_col(rng);
  return Window2{r, c, rows, cols};
}

Image2D crop(const Image2D& image, const Window2& window) { return crop_generic(image, window); }

Label2D crop(const Label2D& image, const Window2& window) { return crop_generic(image, window); }

Image2D random_crop_2d(const Image2D& image, Rng& rng, int size, float pad_value) {
  const Image2D padded = pad_to_size(image, size, size, pad_value, nullptr);
  return crop(padded, random_window(padded.rows, padded.cols, size, size, rng));
}

Volume pad_to_multiple(const Volume& volume, int multiple, PadRecord* record) {
  if (multiple < 1) fail(Errc::kInvalidArgument, "pad multiple must be >= 1");
  Geometry g = volume.geometry();
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = (volume.dim(a) + multiple - 1) / multiple * multiple;
  }
  Volume out(g, volume.space());
  for (int k = 0; k < g.dims[2]; ++k) {
    const int sk = std::min(k, volume.dim(2) - 1);
    for (int j = 0; j < g.dims[1]; ++j) {
      const int sj = std::min(j, volume.dim(1) - 1);
      for (int i = 0; i < g.dims[0]; ++i) {
        out(i, j, k) = volume(std::min(i, volume.dim(0) - 1), sj, sk);
      }
    }
  }
  if (record != nullptr) *record = PadRecord{volume.dims(), g.dims};
  return out;
}

Volume unpad(const Volume& volume, const PadRecord& record) {
  if (volume.dims() != record.padded) {
    fail(Errc::kDimMismatch, "unpad: volume dims do not match the pad record");
  }
  return extract_window(volume, Window3{{0, 0, 0}, record.original});
}

std::array<Grid3<float>, 3> coordinate_ramps(const Index3& full_dims, const Window3& window) {
  check_window(full_dims, window);
  Geometry g;
  g.dims = window.size;
  std::array<Grid3<float>, 3> ramps{Grid3<float>(g), Grid3<float>(g), Grid3<float>(g)};
  for (int k = 0; k < g.dims[2]; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i) {
        const int global[3] = {window.lo[0] + i, window.lo[1] + j, window.lo[2] + k};
        for (int a = 0; a < 3; ++a) {
          const int n = full_dims[a];
          ramps[a](i, j, k) =
              n > 1 ? static_cast<float>(static_cast<double>(global[a]) / (n - 1)) : 0.0f;
        }
      }
    }
  }
  return ramps;
}

std::vector<Window3> patch_windows(const Index3& dims, const Index3& patch, const Index3& stride) {
  std::array<std::vector<int>, 3> starts;
  for (int a = 0; a < 3; ++a) {
    if (patch[a] < 1 || stride[a] < 1) fail(Errc::kInvalidArgument, "patch and stride must be >= 1");
    if (patch[a] > dims[a]) {
      fail(Errc::kPatchTooLarge, "patch extent " + std::to_string(patch[a]) +
                                     " exceeds volume extent " + std::to_string(dims[a]) +
                                     " on axis " + std::to_string(a));
    }
    for (int p = 0; p + patch[a] < dims[a]; p += stride[a]) starts[a].push_back(p);
    const int last = dims[a] - patch[a];
    if (starts[a].empty() || starts[a].back() != last) starts[a].push_back(last);
  }
  std::vector<Window3> out;
  for (int z : starts[2]) {
    for (int y : starts[1]) {
      for (int x : starts[0]) out.push_back(Window3{{x, y, z}, patch});
    }
  }
  return out;
}

Volume extract_window(const Volume& volume, const Window3& window) {
  check_window(volume.dims(), window);
  Geometry g = volume.geometry();
  g.dims = window.size;
  g.origin = volume.geometry().to_world(window.lo[0], window.lo[1], window.lo[2]);
  Volume out(g, volume.space());
  for (int k = 0; k < g.dims[2]; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i) {
        out(i, j, k) = volume(window.lo[0] + i, window.lo[1] + j, window.lo[2] + k);
      }
    }
  }
  return out;
}

std::vector<Patch3> patch_3d(const Volume& volume, const Index3& patch, const Index3& stride) {
  std::vector<Patch3> out;
  for (const auto& w : patch_windows(volume.dims(), patch, stride)) {
    out.push_back({w, extract_window(volume, w)});
  }
  return out;
}

Image2D stitch_2d(const std::vector<Tile2D>& tiles, int rows, int cols) {
  std::vector<double> acc(static_cast<std::size_t>(rows) * cols, 0.0);
  std::vector<double> weight(acc.size(), 0.0);
  for (const auto& tile : tiles) {
    const Window2& w = tile.window;
    if (w.row < 0 || w.col < 0 || w.row + w.rows > rows || w.col + w.cols > cols) {
      fail(Errc::kWindowOutOfBounds, "stitch_2d: tile window outside the output image");
    }
    if (tile.image.rows != w.rows || tile.image.cols != w.cols) {
      fail(Errc::kShapeMismatch, "stitch_2d: tile image does not match its window");
    }
    for (int r = 0; r < w.rows; ++r) {
      const double wr = feather_weight(r, w.rows);
      for (int c = 0; c < w.cols; ++c) {
        const double wt = wr * feather_weight(c, w.cols);
        const std::size_t o = static_cast<std::size_t>(w.row + r) * cols + (w.col + c);
        acc[o] += wt * tile.image(r, c);
        weight[o] += wt;
      }
    }
  }
  Image2D out(rows, cols, -1.0f);
  for (std::size_t o = 0; o < acc.size(); ++o) {
    if (weight[o] > 0.0) out.data[o] = static_cast<float>(acc[o] / weight[o]);
  }
  return out;
}

Grid3<float> stitch_3d(const std::vector<Tile3D>& tiles, const Geometry& geometry) {
  Grid3<double> acc(geometry, 0.0);
  Grid3<double> weight(geometry, 0.0);
  for (const auto& tile : tiles) {
    check_window(geometry.dims, tile.window);
    if (tile.values.dims() != tile.window.size) {
      fail(Errc::kShapeMismatch, "stitch_3d: tile does not match its window");
    }
    const Window3& w = tile.window;
    for (int k = 0; k < w.size[2]; ++k) {
      const double wk = feather_weight(k, w.size[2]);
      for (int j = 0; j < w.size[1]; ++j) {
        const double wj = wk * feather_weight(j, w.size[1]);
        for (int i = 0; i < w.size[0]; ++i) {
          const double wt = wj * feather_weight(i, w.size[0]);
          acc(w.lo[0] + i, w.lo[1] + j, w.lo[2] + k) += wt * tile.values(i, j, k);
          weight(w.lo[0] + i, w.lo[1] + j, w.lo[2] + k) += wt;
        }
      }
    }
  }
  Grid3<float> out(geometry, -1.0f);
  for (std::size_t o = 0; o < out.size(); ++o) {
    if (weight.data()[o] > 0.0) out.data()[o] = static_cast<float>(acc.data()[o] / weight.data()[o]);
  }
  return out;
}

}  // namespace mr2ct
