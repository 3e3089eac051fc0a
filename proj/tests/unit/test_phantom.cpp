#include <numbers>

#include <gtest/gtest.h>

#include "mr2ct/phantom.hpp"
#include "mr2ct/registration.hpp"
#include "test_support.hpp"

namespace mr2ct {
namespace {

PhantomConfig small_config() {
  PhantomConfig c;
  c.n_vertebrae = 3;
  c.seed = 11;
  return c;
}

TEST(Phantom, DistinctVertebraIds) {
  PhantomConfig c;
  c.seed = 2;
  const Phantom p = generate_phantom(c);
  EXPECT_EQ(p.labels.labels(), (std::set<std::int32_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(p.mr.space(), IntensitySpace::kMRRaw);
  EXPECT_EQ(p.ct.space(), IntensitySpace::kHU);
}

TEST(Phantom, DeterministicUnderSeed) {
  PhantomConfig c = small_config();
  c.noise_sigma = 0.0;
  const Phantom a = generate_phantom(c), b = generate_phantom(c);
  EXPECT_EQ(a.ct.data(), b.ct.data());
  EXPECT_EQ(a.mr.data(), b.mr.data());
  c.noise_sigma = 5.0;
  EXPECT_EQ(generate_phantom(c).ct.data(), generate_phantom(c).ct.data());
}

TEST(Phantom, BodyVolumeMatchesEllipsoid) {
  const PhantomConfig c = small_config();
  const Phantom p = generate_phantom(c);
  std::size_t body = 0;
  for (std::size_t n = 0; n < p.labels.size(); ++n) {
    body += p.labels.data()[n] == 2 && p.subregions.data()[n] == kBody;
  }
  const double expected = 4.0 / 3.0 * std::numbers::pi * c.body_radius * c.body_radius * (c.body_height / 2.0);
  EXPECT_NEAR(static_cast<double>(body), expected, 0.1 * expected);
}

TEST(Phantom, SubregionsPartitionVertebrae) {
  const Phantom p = generate_phantom(small_config());
  for (std::size_t n = 0; n < p.labels.size(); ++n) {
    const bool in_label = p.labels.data()[n] != 0;
    const auto s = p.subregions.data()[n];
    EXPECT_EQ(in_label, s == kBody || s == kPosterior);
  }
}

TEST(Phantom, IntensityRelationIsNonMonotonic) {
  const Phantom p = generate_phantom(small_config());
  const Vec3 c = phantom_body_center(small_config(), 2);
  const Vec3 idx = p.ct.geometry().to_index(c);
  const int i = static_cast<int>(std::lround(idx.x())), j = static_cast<int>(std::lround(idx.y())),
            k = static_cast<int>(std::lround(idx.z()));
  // Marrow: bright in MR, mid in CT. Cortical shell: dark in MR, brightest in CT.
  EXPECT_GT(p.mr(i, j, k), 600.0f);
  EXPECT_GT(p.ct(i, j, k), 250.0f);
  const int edge = j - static_cast<int>(small_config().body_radius) + 1;
  EXPECT_GT(p.ct(i, edge, k), 600.0f);
  EXPECT_LT(p.mr(i, edge, k), 200.0f);
}

TEST(Phantom, RejectsInvalidConfig) {
  PhantomConfig c;
  c.n_vertebrae = 1;
  EXPECT_THROW(generate_phantom(c), Error);
  c = PhantomConfig{};
  c.body_radius = -1;
  EXPECT_THROW(generate_phantom(c), Error);
}

TEST(Misalign, IdentityLeavesVolumesUnchanged) {
  const Phantom p = generate_phantom(small_config());
  const Misaligned m = misalign(p.ct, p.labels, &p.subregions, MisalignSpec{});
  EXPECT_EQ(m.labels.data(), p.labels.data());
  EXPECT_EQ(m.subregions.data(), p.subregions.data());
  for (std::size_t n = 0; n < p.ct.size(); ++n) ASSERT_NEAR(m.ct.data()[n], p.ct.data()[n], 1e-3);
}

TEST(Misalign, TranslationShiftsCentroidsExactly) {
  const Phantom p = generate_phantom(small_config());
  MisalignSpec spec;
  spec.global = RigidTransform::translation_only(Vec3(5, 0, 0));
  const Misaligned m = misalign(p.ct, p.labels, &p.subregions, spec);
  const LandmarkSet before = extract_centroids(p.labels, &p.subregions);
  const LandmarkSet after = extract_centroids(m.labels, &m.subregions);
  for (const auto& l : before.entries()) {
    const Landmark* a = after.find(l.vertebra_id);
    ASSERT_NE(a, nullptr);
    EXPECT_NEAR((a->body - l.body - Vec3(5, 0, 0)).norm(), 0.0, 1e-9);
    EXPECT_NEAR((*a->spinous - *l.spinous - Vec3(5, 0, 0)).norm(), 0.0, 1e-9);
  }
}

TEST(Misalign, RotationAboutColumnMovesSpinousNotBody) {
  const PhantomConfig c = small_config();
  const Phantom p = generate_phantom(c);
  const Vec3 center = 0.5 * (phantom_body_center(c, 1) + phantom_body_center(c, c.n_vertebrae));
  MisalignSpec spec;
  spec.global = RigidTransform::about_axis(Vec3::UnitZ(), 15.0 * std::numbers::pi / 180.0, center);
  const Misaligned m = misalign(p.ct, p.labels, &p.subregions, spec);
  const LandmarkSet before = extract_centroids(p.labels, &p.subregions);
  const LandmarkSet after = extract_centroids(m.labels, &m.subregions);
  for (const auto& l : before.entries()) {
    const Landmark* a = after.find(l.vertebra_id);
    EXPECT_LT((a->body - l.body).norm(), 1.0);
    EXPECT_GT((*a->spinous - *l.spinous).norm(), 5.0);
    // Analytic: the moved centroid tracks the transformed original within a voxel.
    EXPECT_LT((*a->spinous - spec.global.apply(*l.spinous)).norm(), 1.0);
  }
}

}  // namespace
}  // namespace mr2ct
