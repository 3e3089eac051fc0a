#include "mr2ct/transform.hpp"

#include <algorithm>
#include <cmath>

namespace mr2ct {

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::then(const RigidTransform& next) const {
  RigidTransform out;
  out.rotation = next.rotation * rotation;
  out.translation = next.rotation * translation + next.translation;
  return out;
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

RigidTransform RigidTransform::about_axis(const Vec3& axis, double angle_rad, const Vec3& center,
                                          const Vec3& shift) {
  if (!(axis.norm() > 0.0)) fail(Errc::kInvalidTransform, "rotation axis has zero length");
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
  t.translation = center - t.rotation * center + shift;
  return t;
}

RigidTransform RigidTransform::translation_only(const Vec3& shift) {
  RigidTransform t;
  t.translation = shift;
  return t;
}

void RigidTransform::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    fail(Errc::kInvalidTransform, "transform contains non-finite values");
  }
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (!(ortho < 1e-9) || !(std::abs(det - 1.0) < 1e-9)) {
    fail(Errc::kInvalidTransform, "rotation is not a proper orthonormal matrix");
  }
}

double RigidTransform::angle() const {
  const double c = std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

}  // namespace mr2ct
