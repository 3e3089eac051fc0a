#include <gtest/gtest.h>

#include "mr2ct/augmentation.hpp"
#include "mr2ct/phantom.hpp"
#include "mr2ct/preprocess.hpp"
#include "test_support.hpp"

namespace mr2ct {
namespace {

Phantom small_phantom() {
  PhantomConfig c;
  c.n_vertebrae = 2;
  c.seed = 3;
  return generate_phantom(c);
}

TEST(Elastic, ZeroSigmaIsIdentity) {
  const Phantom p = small_phantom();
  DeformSpec spec;
  spec.sigma = 0.0;
  const Deformed d = elastic_deform({p.ct}, {p.labels}, spec);
  EXPECT_EQ(d.volumes[0].data(), p.ct.data());
  EXPECT_EQ(d.labels[0].data(), p.labels.data());
}

TEST(Elastic, DeterministicAndLabelSubset) {
  const Phantom p = small_phantom();
  DeformSpec spec;
  spec.seed = 42;
  const Deformed a = elastic_deform({p.ct, p.mr}, {p.labels, p.subregions}, spec);
  const Deformed b = elastic_deform({p.ct, p.mr}, {p.labels, p.subregions}, spec);
  EXPECT_EQ(a.volumes[0].data(), b.volumes[0].data());
  EXPECT_EQ(a.labels[1].data(), b.labels[1].data());
  const auto before = p.labels.labels();
  for (auto v : a.labels[0].labels()) EXPECT_TRUE(before.count(v));
  EXPECT_NE(a.labels[0].data(), p.labels.data());
}

TEST(Elastic, FieldScalesLinearlyWithSigma) {
  const Geometry g = test::make_geometry({12, 10, 8});
  DeformSpec s1, s2;
  s1.seed = s2.seed = 9;
  s1.sigma = 1.0;
  s2.sigma = 3.0;
  const auto f1 = displacement_field(g, s1), f2 = displacement_field(g, s2);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t n = 0; n < f1[c].size(); ++n) EXPECT_NEAR(f2[c].data()[n], 3.0f * f1[c].data()[n], 1e-5);
  }
}

TEST(Elastic, PairedInputsStayAligned) {
  const Phantom p = small_phantom();
  // A volume that encodes the label makes alignment checkable voxel by voxel.
  Volume coded(p.labels.geometry(), IntensitySpace::kNormalized);
  for (std::size_t n = 0; n < coded.size(); ++n) coded.data()[n] = static_cast<float>(p.labels.data()[n]);
  DeformSpec spec;
  spec.seed = 8;
  const auto field = displacement_field(p.labels.geometry(), spec);
  const Deformed d = elastic_deform({coded}, {p.labels}, spec);
  const Geometry& g = p.labels.geometry();
  std::size_t agree = 0, checked = 0;
  for (int k = 0; k < g.dims[2]; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i) {
        const float v = d.volumes[0](i, j, k);
        if (v != std::round(v) || v < 0.0f) continue;  // blended across a boundary, or out of field
        ++checked;
        const Vec3 src = g.to_index(g.to_world(i, j, k) + Vec3(field[0](i, j, k), field[1](i, j, k), field[2](i, j, k)));
        agree += static_cast<std::int32_t>(v) == sample_nearest(p.labels, src) &&
                 d.labels[0](i, j, k) == static_cast<std::int32_t>(v);
      }
    }
  }
  EXPECT_GT(checked, g.voxel_count() / 2);
  EXPECT_EQ(agree, checked);
}

TEST(Elastic, RejectsMismatchedGrids) {
  const Phantom p = small_phantom();
  Volume other(test::make_geometry({3, 3, 3}), IntensitySpace::kHU);
  EXPECT_THROW(elastic_deform({p.ct, other}, {}, DeformSpec{}), Error);
}

TEST(Jitter, IdentityDrawAndConstantImage) {
  Image2D img(4, 4);
  for (std::size_t n = 0; n < img.size(); ++n) img.data[n] = -0.8f + 0.1f * static_cast<float>(n);
  EXPECT_EQ(apply_jitter(img, JitterDraw{1.0, 0.0}).data, img.data);
  const Image2D c(5, 5, 0.3f);
  const Image2D out = apply_jitter(c, JitterDraw{1.17, 0.05});
  for (float v : out.data) EXPECT_FLOAT_EQ(v, 0.35f);
}

TEST(Jitter, DrawRangesAndClamp) {
  Rng rng(1);
  Image2D img(16, 16);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : img.data) v = u(rng);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng r(seed);
    const JitterDraw d = draw_jitter(0.2, 0.2, r);
    EXPECT_GE(d.contrast, 0.8);
    EXPECT_LE(d.contrast, 1.2);
    EXPECT_GE(d.brightness, -0.2);
    EXPECT_LE(d.brightness, 0.2);
    for (float v : intensity_jitter(img, seed).data) {
      EXPECT_GE(v, -1.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  EXPECT_EQ(intensity_jitter(img, 5).data, intensity_jitter(img, 5).data);
}

TEST(Jitter, RejectsUnnormalized) {
  Volume v(test::make_geometry({2, 2, 2}), IntensitySpace::kHU, 100.0f);
  try {
    intensity_jitter(v, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNotNormalized);
  }
}

}  // namespace
}  // namespace mr2ct
