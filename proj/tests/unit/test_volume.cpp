#include <gtest/gtest.h>

#include "mr2ct/distance.hpp"
#include "mr2ct/preprocess.hpp"
#include "test_support.hpp"

namespace mr2ct {
namespace {

using test::make_geometry;

Volume hu_volume(std::vector<float> values) {
  const int n = static_cast<int>(values.size());
  return Volume(make_geometry({n, 1, 1}), IntensitySpace::kHU, std::move(values));
}

TEST(Normalize, CtAnchorsAndClamp) {
  const Volume out = normalize_ct(hu_volume({0.0f, 2500.0f, -1000.0f, -3000.0f, 300.0f}));
  EXPECT_EQ(out.space(), IntensitySpace::kNormalized);
  EXPECT_EQ(out.data()[0], 0.0f);
  EXPECT_EQ(out.data()[1], 1.0f);
  EXPECT_EQ(out.data()[2], -1.0f);
  EXPECT_EQ(out.data()[3], -1.0f);
  EXPECT_FLOAT_EQ(out.data()[4], 0.3f);
}

TEST(Normalize, CtRequiresHu) {
  Volume v = hu_volume({1.0f});
  v.set_space(IntensitySpace::kMRRaw);
  try {
    normalize_ct(v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kWrongIntensitySpace);
  }
}

TEST(Normalize, CtIdempotentOnClampedValues) {
  const Volume once = normalize_ct(hu_volume({-2000.0f, -500.0f, 1500.0f}));
  const Volume twice = normalize_ct(denormalize_ct(once));
  EXPECT_EQ(once.data(), twice.data());
}

TEST(Normalize, MrAnchors) {
  Volume v = hu_volume({0.0f, 400.0f, 200.0f});
  v.set_space(IntensitySpace::kMRRaw);
  const Volume out = normalize_mr(v);
  EXPECT_EQ(out.data()[0], -1.0f);
  EXPECT_EQ(out.data()[1], 1.0f);
  EXPECT_EQ(out.data()[2], 0.0f);
}

TEST(Normalize, MrRejectsAllZero) {
  Volume v = hu_volume({0.0f, 0.0f});
  v.set_space(IntensitySpace::kMRRaw);
  try {
    normalize_mr(v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kAllZeroVolume);
  }
}

TEST(Resample, IdentityIsExact) {
  Volume v(make_geometry({5, 4, 3}, Vec3(1, 2, 3)), IntensitySpace::kNormalized);
  for (std::size_t n = 0; n < v.size(); ++n) v.data()[n] = static_cast<float>(n) / 100.0f;
  EXPECT_EQ(resample(v, v.geometry()).data(), v.data());
}

TEST(Resample, ConstantStaysConstant) {
  Volume v(make_geometry({8, 8, 8}, Vec3(1.0, 1.0, 3.0)), IntensitySpace::kNormalized, 0.25f);
  const Volume out = resample_to_spacing(v, Vec3(0.7, 1.3, 1.0));
  for (float x : out.data()) EXPECT_FLOAT_EQ(x, 0.25f);
}

TEST(Resample, LinearRampAtMidpoints) {
  Volume v(make_geometry({9, 2, 2}, Vec3(2.0, 1.0, 1.0)), IntensitySpace::kNormalized);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) v(i, j, k) = 0.1f * static_cast<float>(i);
    }
  }
  Geometry half = v.geometry();
  half.spacing = Vec3(1.0, 1.0, 1.0);
  half.dims = {17, 2, 2};
  const Volume out = resample(v, half);
  for (int i = 0; i + 1 < 17; i += 2) {
    const double mid = 0.5 * (0.1 * (i / 2) + 0.1 * (i / 2 + 1));
    EXPECT_NEAR(out(i + 1, 0, 0), mid, 1e-6);
  }
}

TEST(Resample, LabelsIntroduceNoNewValues) {
  LabelVolume l(make_geometry({10, 10, 10}));
  for (std::size_t n = 0; n < l.size(); ++n) l.data()[n] = static_cast<std::int32_t>((n * 7) % 5) * 3;
  const LabelVolume out = resample_to_spacing(l, Vec3(0.6, 1.7, 0.9));
  const auto in_set = l.labels();
  for (auto v : out.labels()) EXPECT_TRUE(in_set.count(v));
}

TEST(Resample, WorldPositionPreserved) {
  Geometry g = make_geometry({6, 6, 6}, Vec3(1.5, 1.5, 1.5), Vec3(-10.0, 4.0, 2.0));
  g.direction = test::rotation_xyz(0.1, -0.2, 0.3);
  const Geometry r = respaced_grid(g, Vec3(0.5, 0.5, 0.5));
  const Vec3 half = Vec3::Constant(-0.5);
  EXPECT_LT((r.to_world(half) - g.to_world(half)).norm(), 1e-6);
  EXPECT_LT((r.to_world(Vec3::Constant(17.5)) - g.to_world(Vec3::Constant(5.5))).norm(), 1e-6);
  // A sample lands on the world point it claims: linear field in world x.
  Volume v(g, IntensitySpace::kNormalized);
  for (int k = 0; k < 6; ++k) {
    for (int j = 0; j < 6; ++j) {
      for (int i = 0; i < 6; ++i) v(i, j, k) = static_cast<float>(0.01 * g.to_world(i, j, k).x());
    }
  }
  const Volume out = resample(v, r);
  for (int n : {4, 7, 11}) {
    EXPECT_NEAR(out(n, n, n), 0.01 * r.to_world(n, n, n).x(), 1e-6);
  }
}

TEST(Slices, OnlyLabeledSlicesInOrder) {
  const Geometry g = make_geometry({8, 4, 5});
  Volume v(g, IntensitySpace::kNormalized);
  LabelVolume l(g);
  EXPECT_TRUE(slice_sagittal(v, l).empty());
  l(3, 1, 1) = 2;
  auto s = slice_sagittal(v, l);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].index, 3);
  EXPECT_EQ(s[0].image.rows, 5);
  EXPECT_EQ(s[0].image.cols, 4);
  EXPECT_EQ(s[0].labels(1, 1), 2);
  l(6, 0, 0) = 1;
  s = slice_sagittal(v, l);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].index, 6);
}

TEST(Crop, FullSizeIsIdentityAndDeterministic) {
  Image2D img(256, 256);
  for (std::size_t n = 0; n < img.size(); ++n) img.data[n] = static_cast<float>(n % 97);
  Rng rng(1);
  EXPECT_EQ(random_crop_2d(img, rng).data, img.data);
  Image2D big(300, 300);
  for (std::size_t n = 0; n < big.size(); ++n) big.data[n] = static_cast<float>(n);
  Rng a(9), b(9);
  EXPECT_EQ(random_crop_2d(big, a).data, random_crop_2d(big, b).data);
}

TEST(Crop, SmallInputIsZeroPadded) {
  Image2D img(100, 100, 0.5f);
  Rng rng(3);
  const Image2D out = random_crop_2d(img, rng);
  EXPECT_EQ(out.rows, 256);
  EXPECT_EQ(out.cols, 256);
  int count = 0;
  for (float v : out.data) count += v == 0.5f;
  EXPECT_EQ(count, 100 * 100);
  int first = -1;
  for (int r = 0; r < 256 && first < 0; ++r) {
    if (out(r, 128) == 0.5f) first = r;
  }
  ASSERT_GE(first, 0);
  for (int r = first; r < first + 100; ++r) EXPECT_EQ(out(r, 128), 0.5f);
}

TEST(Pad, MultipleOfEightRoundTrip) {
  Volume v(make_geometry({130, 128, 32}), IntensitySpace::kNormalized);
  for (std::size_t n = 0; n < v.size(); ++n) v.data()[n] = static_cast<float>(n % 1000) / 1000.0f;
  PadRecord rec;
  const Volume p = pad_to_multiple(v, 8, &rec);
  EXPECT_EQ(p.dims(), (Index3{136, 128, 32}));
  EXPECT_EQ(p(135, 5, 5), v(129, 5, 5));
  EXPECT_EQ(unpad(p, rec).data(), v.data());
  Volume exact(make_geometry({128, 128, 32}), IntensitySpace::kNormalized);
  EXPECT_EQ(pad_to_multiple(exact, 8, &rec).dims(), (Index3{128, 128, 32}));
}

TEST(Ramps, AnchorsAndHalfWindow) {
  const Index3 full{9, 5, 1};
  auto r = coordinate_ramps(full, Window3{{0, 0, 0}, full});
  EXPECT_EQ(r[0](0, 0, 0), 0.0f);
  EXPECT_EQ(r[0](8, 0, 0), 1.0f);
  EXPECT_EQ(r[1](0, 4, 0), 1.0f);
  for (float v : r[2].data()) EXPECT_EQ(v, 0.0f);
  r = coordinate_ramps(full, Window3{{2, 1, 0}, {5, 3, 1}});
  EXPECT_FLOAT_EQ(r[0](0, 0, 0), 2.0f / 8.0f);
  EXPECT_FLOAT_EQ(r[0](4, 0, 0), 6.0f / 8.0f);
  EXPECT_FLOAT_EQ(r[1](0, 2, 0), 3.0f / 4.0f);
  EXPECT_THROW(coordinate_ramps(full, Window3{{6, 0, 0}, {5, 1, 1}}), Error);
}

TEST(Stitch, SingleTileAndConstantOverlap) {
  Image2D img(6, 7);
  for (std::size_t n = 0; n < img.size(); ++n) img.data[n] = static_cast<float>(n) / 50.0f;
  EXPECT_EQ(stitch_2d({{img, Window2{0, 0, 6, 7}}}, 6, 7).data, img.data);
  const Image2D c(6, 6, 0.3f);
  const Image2D out = stitch_2d({{c, Window2{0, 0, 6, 6}}, {c, Window2{0, 3, 6, 6}}}, 6, 9);
  for (float v : out.data) EXPECT_FLOAT_EQ(v, 0.3f);
}

TEST(Stitch, FeatheredTransitionIsMonotone) {
  const Image2D a(4, 8, 0.0f), b(4, 8, 1.0f);
  const Image2D out = stitch_2d({{a, Window2{0, 0, 4, 8}}, {b, Window2{0, 4, 4, 8}}}, 4, 12);
  for (int c = 0; c + 1 < 12; ++c) EXPECT_LE(out(1, c), out(1, c + 1));
  EXPECT_EQ(out(1, 0), 0.0f);
  EXPECT_EQ(out(1, 11), 1.0f);
  for (int c = 4; c < 8; ++c) {
    const double wa = feather_weight(c, 8), wb = feather_weight(c - 4, 8);
    EXPECT_NEAR(out(1, c), wb / (wa + wb), 1e-6);
  }
}

TEST(Stitch, UncoveredIsAir) {
  const Image2D out = stitch_2d({{Image2D(2, 2, 0.5f), Window2{0, 0, 2, 2}}}, 3, 3);
  EXPECT_EQ(out(2, 2), -1.0f);
}

TEST(Patches, CountsAndCoverage) {
  EXPECT_EQ(patch_windows({128, 128, 32}, {128, 128, 32}, {128, 128, 32}).size(), 1u);
  EXPECT_EQ(patch_windows({256, 256, 32}, {128, 128, 32}, {128, 128, 32}).size(), 4u);
  const Index3 dims{37, 21, 13};
  const auto w = patch_windows(dims, {16, 8, 5}, {12, 8, 4});
  std::vector<int> covered(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0);
  for (const auto& win : w) {
    for (int a = 0; a < 3; ++a) {
      EXPECT_GE(win.lo[a], 0);
      EXPECT_LE(win.lo[a] + win.size[a], dims[a]);
    }
    for (int k = win.lo[2]; k < win.lo[2] + win.size[2]; ++k) {
      for (int j = win.lo[1]; j < win.lo[1] + win.size[1]; ++j) {
        for (int i = win.lo[0]; i < win.lo[0] + win.size[0]; ++i) covered[i + dims[0] * (j + dims[1] * k)] = 1;
      }
    }
  }
  for (int c : covered) EXPECT_EQ(c, 1);
  try {
    patch_windows({8, 8, 8}, {16, 8, 8}, {16, 8, 8});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kPatchTooLarge);
  }
}

TEST(Patches, Stitch3dReassemblesVolume) {
  Volume v(make_geometry({20, 12, 9}), IntensitySpace::kNormalized);
  for (std::size_t n = 0; n < v.size(); ++n) v.data()[n] = std::sin(static_cast<float>(n));
  std::vector<Tile3D> tiles;
  for (const auto& p : patch_3d(v, {8, 8, 4}, {6, 4, 3})) tiles.push_back({p.volume, p.window});
  const Grid3<float> out = stitch_3d(tiles, v.geometry());
  for (std::size_t n = 0; n < v.size(); ++n) EXPECT_NEAR(out.data()[n], v.data()[n], 1e-6);
}

TEST(Distance, MatchesBruteForce) {
  Label2D l(23, 31);
  l(4, 5) = 1;
  l(17, 25) = 3;
  l(10, 12) = 2;
  const auto d = squared_distance_to_labels(l);
  for (int r = 0; r < l.rows; ++r) {
    for (int c = 0; c < l.cols; ++c) {
      double best = 1e300;
      for (int rr = 0; rr < l.rows; ++rr) {
        for (int cc = 0; cc < l.cols; ++cc) {
          if (l(rr, cc) != 0) best = std::min(best, double((r - rr) * (r - rr) + (c - cc) * (c - cc)));
        }
      }
      EXPECT_EQ(d[static_cast<std::size_t>(r) * l.cols + c], best);
    }
  }
}

TEST(Distance, AnisotropicSpacing3d) {
  const Index3 dims{7, 6, 5};
  std::vector<std::uint8_t> f(7 * 6 * 5, 0);
  f[2 + 7 * (3 + 6 * 1)] = 1;
  const Vec3 sp(0.5, 1.5, 2.0);
  const auto d = squared_distance_transform(f, dims, sp);
  for (int k = 0; k < 5; ++k) {
    for (int j = 0; j < 6; ++j) {
      for (int i = 0; i < 7; ++i) {
        const double e = std::pow((i - 2) * 0.5, 2) + std::pow((j - 3) * 1.5, 2) + std::pow((k - 1) * 2.0, 2);
        EXPECT_NEAR(d[i + 7 * (j + 6 * k)], e, 1e-9);
      }
    }
  }
}

}  // namespace
}  // namespace mr2ct
