#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mr2ct/error.hpp"

namespace mr2ct {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Index3 = std::array<int, 3>;

// Voxel layout: axis 0 is left/right (one index per sagittal slice), axis 1
// anterior/posterior, axis 2 craniocaudal. Axis 0 varies fastest in memory,
// matching the NIfTI payload order.
struct Geometry {
  Index3 dims{1, 1, 1};
  Vec3 spacing = Vec3::Ones();
  Vec3 origin = Vec3::Zero();
  Mat3 direction = Mat3::Identity();

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }

  // World position (mm) of a continuous voxel index.
  Vec3 to_world(const Vec3& index) const {
    return origin + direction * spacing.cwiseProduct(index);
  }
  Vec3 to_world(int i, int j, int k) const { return to_world(Vec3(i, j, k)); }
  Vec3 to_index(const Vec3& world) const {
    return (direction.transpose() * (world - origin)).cwiseQuotient(spacing);
  }

  // 4x4 voxel-to-world affine.
  Mat4 affine() const;
  static Geometry from_affine(const Mat4& affine, const Index3& dims);

  // Throws Errc::kDegenerateSpacing / kInvalidArgument on broken invariants.
  void validate() const;
  bool same_grid(const Geometry& other, double tol = 1e-6) const;
};

// Dense 3D grid with world geometry.
template <typename T>
class Grid3 {
 public:
  using value_type = T;

  Grid3() = default;
  explicit Grid3(const Geometry& geometry, T fill = T{})
      : geometry_(geometry), data_(geometry.voxel_count(), fill) {}
  Grid3(const Geometry& geometry, std::vector<T> data)
      : geometry_(geometry), data_(std::move(data)) {
    if (data_.size() != geometry_.voxel_count()) {
      fail(Errc::kDimMismatch, "grid payload size does not match dims");
    }
  }

  const Geometry& geometry() const { return geometry_; }
  Geometry& geometry() { return geometry_; }
  const Index3& dims() const { return geometry_.dims; }
  int dim(int axis) const { return geometry_.dims[axis]; }
  std::size_t size() const { return data_.size(); }

  std::size_t offset(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(geometry_.dims[0]) *
               (static_cast<std::size_t>(j) +
                static_cast<std::size_t>(geometry_.dims[1]) * k);
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < geometry_.dims[0] &&
           j < geometry_.dims[1] && k < geometry_.dims[2];
  }

  T& operator()(int i, int j, int k) { return data_[offset(i, j, k)]; }
  const T& operator()(int i, int j, int k) const { return data_[offset(i, j, k)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }
  std::span<const T> values() const { return data_; }

 private:
  Geometry geometry_;
  std::vector<T> data_;
};

enum class IntensitySpace { kHU, kMRRaw, kNormalized, kUnknown };

const char* intensity_space_name(IntensitySpace space);

// Scalar image volume (CT in HU, raw MR, or normalized to [-1, 1]).
class Volume : public Grid3<float> {
 public:
  Volume() = default;
  Volume(const Geometry& geometry, IntensitySpace space, float fill = 0.0f)
      : Grid3<float>(geometry, fill), space_(space) {}
  Volume(const Geometry& geometry, IntensitySpace space, std::vector<float> data)
      : Grid3<float>(geometry, std::move(data)), space_(space) {}

  IntensitySpace space() const { return space_; }
  void set_space(IntensitySpace space) { space_ = space; }

 private:
  IntensitySpace space_ = IntensitySpace::kUnknown;
};

// Subregion codes stored in subregion label volumes.
enum Subregion : std::int32_t { kBackground = 0, kBody = 1, kPosterior = 2 };

enum class LabelKind { kVertebra, kSubregion };

// Integer label volume; 0 is background.
class LabelVolume : public Grid3<std::int32_t> {
 public:
  LabelVolume() = default;
  explicit LabelVolume(const Geometry& geometry, LabelKind kind = LabelKind::kVertebra)
      : Grid3<std::int32_t>(geometry, 0), kind_(kind) {}
  LabelVolume(const Geometry& geometry, std::vector<std::int32_t> data,
              LabelKind kind = LabelKind::kVertebra)
      : Grid3<std::int32_t>(geometry, std::move(data)), kind_(kind) {}

  LabelKind kind() const { return kind_; }
  void set_kind(LabelKind kind) { kind_ = kind; }

  // Sorted nonzero labels present.
  std::set<std::int32_t> labels() const;

 private:
  LabelKind kind_ = LabelKind::kVertebra;
};

// Row-major 2D image; rows index the craniocaudal axis of a sagittal slice.
template <typename T>
struct Grid2 {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Grid2() = default;
  Grid2(int r, int c, T fill = T{})
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  Grid2(int r, int c, std::vector<T> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != static_cast<std::size_t>(r) * c) {
      fail(Errc::kDimMismatch, "image payload size does not match shape");
    }
  }

  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Grid2& other) const {
    return rows == other.rows && cols == other.cols;
  }
  template <typename U>
  bool same_shape(const Grid2<U>& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

using Image2D = Grid2<float>;
using Label2D = Grid2<std::int32_t>;

// Axis-aligned voxel window [lo, lo + size).
struct Window3 {
  Index3 lo{0, 0, 0};
  Index3 size{0, 0, 0};
};

struct Window2 {
  int row = 0;
  int col = 0;
  int rows = 0;
  int cols = 0;
};

}  // namespace mr2ct
