#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mr2ct/transform.hpp"
#include "mr2ct/volume.hpp"

namespace mr2ct {

struct Landmark {
  std::int32_t vertebra_id = 0;
  Vec3 body;                    // centre of mass of the vertebral body (world mm)
  std::optional<Vec3> spinous;  // centre of mass of the posterior elements
};

// Per-vertebra landmarks, sorted by vertebra id, ids unique.
class LandmarkSet {
 public:
  LandmarkSet() = default;
  explicit LandmarkSet(std::vector<Landmark> entries);

  const std::vector<Landmark>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Landmark* find(std::int32_t id) const;
  bool has_all_spinous() const;

  LandmarkSet transformed(const RigidTransform& t) const;

 private:
  std::vector<Landmark> entries_;
};

// Unweighted world-space centroids per label. Body centroid uses kBody
// subregion voxels when `subregions` is given (whole vertebra otherwise);
// spinous centroid uses kPosterior voxels and is present only with subregions.
LandmarkSet extract_centroids(const LabelVolume& labels, const LabelVolume* subregions = nullptr);

// Loop edge: landmarks recomputed from a segmentation of a
// synthesized CT. Same contract as extract_centroids.
LandmarkSet regenerate_landmarks(const LabelVolume& segmentation, const LabelVolume& subregions);

enum class RegistrationMode { kNone, kOnePoint, kTwoPoint };

const char* registration_mode_name(RegistrationMode mode);
RegistrationMode parse_registration_mode(const std::string& text);

struct FitReport {
  RigidTransform transform;
  double rms = 0.0;        // mm, residual over matched points after the fit
  bool collinear = false;  // cross-covariance has rank <= 1
  std::size_t n_points = 0;
  std::vector<std::int32_t> matched_ids;
  Vec3 singular_values = Vec3::Zero();
};

// Least-squares rigid fit mapping src onto dst (dst ~= R src + t), matched by
// vertebra id. One-point mode uses body centroids; two-point mode adds the
// spinous centroids and requires them on both sides.
FitReport fit_rigid(const LandmarkSet& src, const LandmarkSet& dst, RegistrationMode mode);

// Point-set variant of the same solver (exposed for testing).
FitReport fit_rigid_points(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

// Resamples `moving` onto `target` so that moving anatomy at p lands at t(p).
Volume apply_rigid(const Volume& moving, const RigidTransform& t, const Geometry& target);
LabelVolume apply_rigid(const LabelVolume& moving, const RigidTransform& t, const Geometry& target);

// Plain-text landmark files: `vertebra_id x y z [sx sy sz]`, '#' comments.
LandmarkSet read_landmarks(const std::filesystem::path& path);
void write_landmarks(const LandmarkSet& set, const std::filesystem::path& path);

}  // namespace mr2ct
