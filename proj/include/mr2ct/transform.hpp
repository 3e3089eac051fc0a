#pragma once

#include "mr2ct/volume.hpp"

namespace mr2ct {

// Proper rigid motion p' = R p + t in world millimetres.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  // (next ∘ this): apply this, then `next`.
  RigidTransform then(const RigidTransform& next) const;
  Mat4 matrix() const;

  // Rotation by `angle_rad` about the line through `center` along `axis`,
  // followed by `shift`.
  static RigidTransform about_axis(const Vec3& axis, double angle_rad, const Vec3& center,
                                   const Vec3& shift = Vec3::Zero());
  static RigidTransform translation_only(const Vec3& shift);

  // Throws kInvalidTransform unless det(R) = +1 and R^T R = I within 1e-9.
  void validate() const;
  // Rotation angle in radians, in [0, pi].
  double angle() const;
};

}  // namespace mr2ct
