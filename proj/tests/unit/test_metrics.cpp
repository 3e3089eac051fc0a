#include <cmath>

#include <gtest/gtest.h>

#include "mr2ct/metrics.hpp"
#include "mr2ct/random.hpp"
#include "mr2ct/report.hpp"
#include "mr2ct/stats.hpp"
#include "test_support.hpp"

namespace mr2ct {
namespace {

Image2D random_image(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Image2D img(rows, cols);
  for (auto& v : img.data) v = u(rng);
  return img;
}

Image2D from_json(const nlohmann::json& c, const char* key) {
  Image2D img(c["rows"].get<int>(), c["cols"].get<int>());
  const auto& v = c[key];
  for (std::size_t n = 0; n < img.size(); ++n) img.data[n] = v[n].get<float>();
  return img;
}

Image2D byte_range(const Image2D& img) {
  Image2D out = img;
  for (auto& v : out.data) v = static_cast<float>((static_cast<double>(v) + 1.0) * 127.5);
  return out;
}

TEST(Mask, FullEmptyAndDisc) {
  const Image2D img = random_image(40, 40, 1);
  EXPECT_EQ(spine_mask(img, Label2D(40, 40, 1)).data, img.data);
  for (float v : spine_mask(img, Label2D(40, 40, 0)).data) EXPECT_EQ(v, 0.0f);
  Label2D one(40, 40, 0);
  one(20, 17) = 3;
  const Image2D ones(40, 40, 1.0f);
  const Image2D m = spine_mask(ones, one);
  int kept = 0, brute = 0;
  for (int r = 0; r < 40; ++r) {
    for (int c = 0; c < 40; ++c) {
      kept += m(r, c) != 0.0f;
      brute += (r - 20) * (r - 20) + (c - 17) * (c - 17) <= 100;
    }
  }
  EXPECT_EQ(kept, brute);
}

TEST(Mask, ShapeMismatch) {
  EXPECT_THROW(spine_mask(Image2D(3, 3), Label2D(3, 4)), Error);
}

TEST(Basic, L1MseClosedFormsAndBruteForce) {
  const Image2D a = random_image(17, 23, 2);
  EXPECT_EQ(l1(a, a), 0.0);
  EXPECT_EQ(mse(a, a), 0.0);
  Image2D b(4, 4, 0.2f), c(4, 4, 0.3f);
  EXPECT_NEAR(l1(b, c), 0.1, 1e-7);
  EXPECT_NEAR(mse(b, c), 0.01, 1e-7);
  const Image2D d = random_image(17, 23, 3);
  double s1 = 0, s2 = 0;
  for (int r = 0; r < 17; ++r) {
    for (int col = 0; col < 23; ++col) {
      const double x = double(a(r, col)) - double(d(r, col));
      s1 += std::abs(x);
      s2 += x * x;
    }
  }
  EXPECT_NEAR(l1(a, d), s1 / (17 * 23), 1e-12);
  EXPECT_NEAR(mse(a, d), s2 / (17 * 23), 1e-12);
  EXPECT_THROW(l1(a, b), Error);
}

TEST(Psnr, ClosedForms) {
  const Image2D a = random_image(8, 8, 4);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_NEAR(psnr_from_mse(0.01, 1.0), 20.0, 1e-12);
  EXPECT_NEAR(psnr_from_mse(0.0023, 1.0), 26.38, 0.005);
  EXPECT_THROW(psnr_from_mse(0.01, 0.0), Error);
}

TEST(Ssim, IdentityAnticorrelationSymmetry) {
  const Image2D a = random_image(32, 32, 5);
  EXPECT_NEAR(ssim(a, a, 2.0), 1.0, 1e-12);
  // Locally zero-mean pattern: a checkerboard.
  Image2D checker(32, 32), neg(32, 32);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      checker(r, c) = (r + c) % 2 == 0 ? 0.5f : -0.5f;
      neg(r, c) = -checker(r, c);
    }
  }
  EXPECT_LE(ssim(checker, neg, 2.0), 0.0);
  const Image2D b = random_image(32, 32, 6);
  EXPECT_DOUBLE_EQ(ssim(a, b, 2.0), ssim(b, a, 2.0));
  try {
    ssim(Image2D(10, 10), Image2D(10, 10), 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kImageTooSmall);
  }
}

TEST(Vifp, IdentityNoiseAndAsymmetry) {
  Image2D a(64, 64);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) a(r, c) = static_cast<float>(128 + 60 * std::sin(r * 0.3) * std::cos(c * 0.2));
  }
  EXPECT_NEAR(vifp(a, a), 1.0, 1e-6);
  Rng rng(9);
  std::uniform_real_distribution<float> u(0.0f, 255.0f);
  Image2D noise(64, 64);
  for (auto& v : noise.data) v = u(rng);
  EXPECT_LT(vifp(a, noise), 0.05);
  Image2D blurred = a;
  for (int r = 1; r < 63; ++r) {
    for (int c = 1; c < 63; ++c) blurred(r, c) = 0.5f * a(r, c) + 0.125f * (a(r - 1, c) + a(r + 1, c) + a(r, c - 1) + a(r, c + 1));
  }
  EXPECT_NE(vifp(a, blurred), vifp(blurred, a));
}

TEST(Oracles, MatchReferenceImplementations) {
  const auto cases = test::oracles()["metrics"];
  ASSERT_EQ(cases.size(), 10u);
  for (const auto& c : cases) {
    const Image2D a = from_json(c, "a"), b = from_json(c, "b");
    EXPECT_NEAR(psnr(a, b, 1.0), c["psnr_peak1"].get<double>(), 0.01);
    EXPECT_NEAR(ssim(a, b, 2.0), c["ssim_peak2"].get<double>(), 1e-4);
    EXPECT_NEAR(vifp(byte_range(a), byte_range(b)), c["vifp_bytes"].get<double>(), 1e-3);
  }
}

LabelVolume cube(Index3 dims, Index3 lo, int side, std::int32_t id) {
  LabelVolume l(test::make_geometry(dims));
  for (int k = lo[2]; k < lo[2] + side; ++k) {
    for (int j = lo[1]; j < lo[1] + side; ++j) {
      for (int i = lo[0]; i < lo[0] + side; ++i) l(i, j, k) = id;
    }
  }
  return l;
}

TEST(Dice, ConstructedOverlaps) {
  const Index3 dims{20, 20, 20};
  const LabelVolume a = cube(dims, {2, 2, 2}, 8, 1);
  EXPECT_EQ(dice_rows(a, a, "v")[0].dice, 1.0);
  EXPECT_EQ(dice_rows(a, cube(dims, {11, 11, 11}, 8, 1), "v")[0].dice, 0.0);
  const LabelVolume half = cube(dims, {6, 2, 2}, 8, 1);
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    na += a.data()[n] == 1;
    nb += half.data()[n] == 1;
    inter += a.data()[n] == 1 && half.data()[n] == 1;
  }
  EXPECT_EQ(dice_rows(a, half, "v")[0].dice, 2.0 * inter / (na + nb));
  EXPECT_EQ(dice_rows(a, half, "v")[0].dice, 0.5);
}

TEST(Dice, RelabelingInvariance) {
  const Index3 dims{12, 12, 12};
  LabelVolume a = cube(dims, {0, 0, 0}, 5, 1), b = cube(dims, {1, 0, 0}, 5, 1);
  for (int k = 6; k < 11; ++k) {
    for (int j = 6; j < 11; ++j) {
      for (int i = 6; i < 11; ++i) {
        a(i, j, k) = 2;
        b(i, j, k - 1) = 2;
      }
    }
  }
  auto swap = [](LabelVolume l) {
    for (auto& v : l.data()) v = v == 1 ? 7 : v == 2 ? 3 : v;
    return l;
  };
  const double before = dice_per_vertebra(dice_rows(a, b, "v"), DiceSubset::kAll);
  EXPECT_DOUBLE_EQ(dice_per_vertebra(dice_rows(swap(a), swap(b), "v"), DiceSubset::kAll), before);
}

TEST(Dice, PosteriorSubsetAndAggregation) {
  const Index3 dims{10, 10, 10};
  const LabelVolume a = cube(dims, {0, 0, 0}, 6, 1);
  LabelVolume sub_a(a.geometry(), LabelKind::kSubregion), sub_b(a.geometry(), LabelKind::kSubregion);
  for (std::size_t n = 0; n < a.size(); ++n) {
    if (a.data()[n] == 0) continue;
    const int j = static_cast<int>((n / 10) % 10);
    sub_a.data()[n] = j < 3 ? kBody : kPosterior;
    sub_b.data()[n] = j < 4 ? kBody : kPosterior;
  }
  const auto rows = dice_rows(a, a, "v", &sub_a, &sub_b);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].subset, DiceSubset::kPosterior);
  EXPECT_NEAR(rows[1].dice, 2.0 * 2 / (3 + 2), 1e-12);
  std::vector<DiceRow> pooled{{"a", 1, DiceSubset::kAll, 1.0}, {"a", 2, DiceSubset::kAll, 0.5},
                              {"a", 3, DiceSubset::kAll, 0.0}, {"b", 1, DiceSubset::kAll, 0.8}};
  EXPECT_NEAR(dice_per_vertebra(pooled, DiceSubset::kAll), 2.3 / 4, 1e-12);
  EXPECT_NEAR(dice_per_volume(pooled, DiceSubset::kAll), (0.5 + 0.8) / 2, 1e-12);
  EXPECT_THROW(dice_rows(a, LabelVolume(test::make_geometry({5, 5, 5})), "v"), Error);
}

TEST(Dice, MatchLabelsByOverlap) {
  const Index3 dims{12, 12, 12};
  LabelVolume ref = cube(dims, {0, 0, 0}, 5, 1), pred = cube(dims, {0, 0, 1}, 5, 9);
  for (int k = 6; k < 11; ++k) {
    for (int j = 6; j < 11; ++j) {
      for (int i = 6; i < 11; ++i) {
        ref(i, j, k) = 2;
        pred(i, j, k) = 4;
      }
    }
  }
  const LabelVolume m = match_labels(pred, ref);
  EXPECT_EQ(m(0, 0, 2), 1);
  EXPECT_EQ(m(7, 7, 7), 2);
}

TEST(TTest, TableValueAndOracleCdf) {
  EXPECT_NEAR(student_t_two_sided(2.262, 9), 0.05, 1e-3);
  for (const auto& r : test::oracles()["ttest"]["cdf"]) {
    EXPECT_NEAR(student_t_two_sided(r["t"].get<double>(), r["df"].get<double>()), r["p"].get<double>(), 1e-10);
  }
  for (const auto& r : test::oracles()["ttest"]["paired"]) {
    const auto res = paired_ttest(r["x"].get<std::vector<double>>(), r["y"].get<std::vector<double>>());
    EXPECT_NEAR(res.t, r["t"].get<double>(), 1e-9);
    EXPECT_NEAR(res.p, r["p"].get<double>(), 1e-9);
  }
}

TEST(TTest, AntisymmetryAndSentinels) {
  const std::vector<double> x{1.0, 2.5, 3.1, 0.4, 2.2}, y{0.7, 2.9, 2.0, 0.1, 1.6};
  const auto a = paired_ttest(x, y), b = paired_ttest(y, x);
  EXPECT_DOUBLE_EQ(a.t, -b.t);
  EXPECT_DOUBLE_EQ(a.p, b.p);
  const auto same = paired_ttest(x, x);
  EXPECT_EQ(same.t, 0.0);
  EXPECT_EQ(same.p, 1.0);
  const auto shift = paired_ttest({1, 2, 3}, {0, 1, 2});
  EXPECT_EQ(shift.p, 0.0);
  EXPECT_TRUE(std::isinf(shift.t));
  EXPECT_THROW(paired_ttest({1, 2}, {1}), Error);
  EXPECT_THROW(paired_ttest({1}, {1}), Error);
  EXPECT_EQ(worst_p({0.01, 0.2, 0.03}), 0.2);
  EXPECT_THROW(worst_p({}), Error);
}

TEST(Report, DoublesRoundTripAndInf) {
  for (double v : {0.1, 1.0 / 3.0, 26.38, -1e-300}) EXPECT_EQ(parse_double(format_double(v)), v);
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_TRUE(std::isinf(parse_double("inf")));
  EXPECT_EQ(json_double(std::numeric_limits<double>::infinity()), "inf");
  const std::string csv = image_metrics_csv({{"m", "v", 3, 0.1, 0.0, std::numeric_limits<double>::infinity(), 1.0, 1.0}});
  EXPECT_EQ(csv, std::string(kImageMetricsHeader) + "\nm,v,3,0.1,0,inf,1,1\n");
}

}  // namespace
}  // namespace mr2ct
