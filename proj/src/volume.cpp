#include "mr2ct/volume.hpp"

#include <cmath>

namespace mr2ct {

Mat4 Geometry::affine() const {
  Mat4 a = Mat4::Identity();
  a.topLeftCorner<3, 3>() = direction * spacing.asDiagonal();
  a.topRightCorner<3, 1>() = origin;
  return a;
}

Geometry Geometry::from_affine(const Mat4& affine, const Index3& dims) {
  Geometry g;
  g.dims = dims;
  const Mat3 m = affine.topLeftCorner<3, 3>();
  for (int c = 0; c < 3; ++c) {
    const double n = m.col(c).norm();
    if (!(n > 0.0)) fail(Errc::kDegenerateSpacing, "affine column has zero length");
    g.spacing[c] = n;
    g.direction.col(c) = m.col(c) / n;
  }
  // Sheared affines are projected onto the nearest rotation (polar factor).
  const double ortho_err =
      (g.direction.transpose() * g.direction - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > 1e-9) {
    Eigen::JacobiSVD<Mat3> svd(g.direction, Eigen::ComputeFullU | Eigen::ComputeFullV);
    g.direction = svd.matrixU() * svd.matrixV().transpose();
  }
  g.origin = affine.topRightCorner<3, 1>();
  return g;
}

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) fail(Errc::kInvalidArgument, "dims must be >= 1 on every axis");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      fail(Errc::kDegenerateSpacing, "spacing must be positive and finite on every axis");
    }
  }
  const double err = (direction.transpose() * direction - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(err < 1e-9)) fail(Errc::kInvalidArgument, "direction cosines are not orthonormal");
}

bool Geometry::same_grid(const Geometry& other, double tol) const {
  return dims == other.dims && (spacing - other.spacing).cwiseAbs().maxCoeff() <= tol &&
         (origin - other.origin).cwiseAbs().maxCoeff() <= tol &&
         (direction - other.direction).cwiseAbs().maxCoeff() <= tol;
}

const char* intensity_space_name(IntensitySpace space) {
  switch (space) {
    case IntensitySpace::kHU: return "hu";
    case IntensitySpace::kMRRaw: return "mr-raw";
    case IntensitySpace::kNormalized: return "normalized";
    case IntensitySpace::kUnknown: return "unknown";
  }
  return "unknown";
}

std::set<std::int32_t> LabelVolume::labels() const {
  std::set<std::int32_t> out;
  std::int32_t last = 0;
  for (auto v : data()) {
    if (v != 0 && v != last) {
      out.insert(v);
      last = v;
    }
  }
  return out;
}

}  // namespace mr2ct
