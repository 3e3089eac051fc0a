#include <gtest/gtest.h>

#include "mr2ct/metrics.hpp"
#include "mr2ct/phantom.hpp"
#include "mr2ct/registration.hpp"
#include "mr2ct/segmentation.hpp"
#include "test_support.hpp"

namespace mr2ct {
namespace {

Phantom phantom(int n = 5, std::uint64_t seed = 1) {
  PhantomConfig c;
  c.n_vertebrae = n;
  c.seed = seed;
  return generate_phantom(c);
}

TEST(Threshold, CountsVertebraeAndHighDice) {
  const Phantom p = phantom();
  const Segmentation s = threshold_segment(p.ct);
  EXPECT_EQ(s.labels.labels(), p.labels.labels());
  const auto rows = dice_rows(p.labels, s.labels, "p", &p.subregions, &s.subregions);
  for (const auto& r : rows) {
    if (r.subset == DiceSubset::kAll) EXPECT_GE(r.dice, 0.95) << r.vertebra_id;
  }
}

TEST(Threshold, AcceptsNormalizedInput) {
  const Phantom p = phantom(3);
  Volume n = p.ct;
  for (auto& v : n.data()) v = std::clamp(v / 1000.0f, -1.0f, 1.0f);
  n.set_space(IntensitySpace::kNormalized);
  EXPECT_EQ(threshold_segment(n).labels.data(), threshold_segment(p.ct).labels.data());
}

TEST(Threshold, SubregionsPartitionLabels) {
  const Segmentation s = threshold_segment(phantom(3).ct);
  for (std::size_t n = 0; n < s.labels.size(); ++n) {
    const auto sub = s.subregions.data()[n];
    EXPECT_EQ(s.labels.data()[n] != 0, sub == kBody || sub == kPosterior);
  }
}

TEST(Threshold, CentroidsCloseTheLoop) {
  const Phantom p = phantom(4, 9);
  const Segmentation s = threshold_segment(p.ct);
  const LandmarkSet truth = extract_centroids(p.labels, &p.subregions);
  const LandmarkSet regen = regenerate_landmarks(s.labels, s.subregions);
  for (const auto& l : truth.entries()) {
    const Landmark* r = regen.find(l.vertebra_id);
    ASSERT_NE(r, nullptr);
    EXPECT_LT((r->body - l.body).norm(), 1.0);
  }
}

TEST(Threshold, AirVolumeIsAnError) {
  Volume air(test::make_geometry({10, 10, 10}), IntensitySpace::kHU, -1000.0f);
  try {
    threshold_segment(air);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kEmptyBoneMask);
  }
  Volume mr(test::make_geometry({4, 4, 4}), IntensitySpace::kMRRaw, 1.0f);
  EXPECT_THROW(threshold_segment(mr), Error);
}

TEST(Threshold, Deterministic) {
  const Phantom p = phantom(3, 4);
  const Segmentation a = threshold_segment(p.ct), b = threshold_segment(p.ct);
  EXPECT_EQ(a.labels.data(), b.labels.data());
  EXPECT_EQ(a.subregions.data(), b.subregions.data());
}

TEST(Components, TwentySixConnectivity) {
  const Index3 dims{4, 4, 4};
  std::vector<std::uint8_t> m(64, 0);
  m[0] = 1;
  m[1 + 4 * (1 + 4 * 1)] = 1;  // diagonal neighbour
  m[3 + 4 * (3 + 4 * 3)] = 1;
  std::vector<std::int32_t> out;
  EXPECT_EQ(connected_components(m, dims, out), 2);
  EXPECT_EQ(out[0], out[1 + 4 * (1 + 4 * 1)]);
  EXPECT_NE(out[0], out[63]);
}

TEST(Exclusion, IdentityWhenNothingMatches) {
  const Phantom p = phantom(4);
  const Exclusion e = exclude_unsupported(p.labels, ExclusionRules{});
  EXPECT_TRUE(e.excluded.empty());
  EXPECT_EQ(e.labels.data(), p.labels.data());
}

TEST(Exclusion, SacrumLabelDropped) {
  const Phantom p = phantom(4);
  ExclusionRules r;
  r.sacrum_labels = {4};
  const Exclusion e = exclude_unsupported(p.labels, r);
  EXPECT_EQ(e.excluded, (std::vector<std::int32_t>{4}));
  EXPECT_FALSE(e.labels.labels().count(4));
}

LabelVolume crop_top(const LabelVolume& l, int new_k) {
  Geometry g = l.geometry();
  g.dims[2] = new_k;
  LabelVolume out(g);
  for (int k = 0; k < new_k; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i) out(i, j, k) = l(i, j, k);
    }
  }
  return out;
}

int max_k(const LabelVolume& l, std::int32_t id) {
  int best = -1;
  for (int k = 0; k < l.dim(2); ++k) {
    for (int j = 0; j < l.dim(1); ++j) {
      for (int i = 0; i < l.dim(0); ++i) {
        if (l(i, j, k) == id) best = k;
      }
    }
  }
  return best;
}

int min_k(const LabelVolume& l, std::int32_t id) {
  for (int k = 0; k < l.dim(2); ++k) {
    for (int j = 0; j < l.dim(1); ++j) {
      for (int i = 0; i < l.dim(0); ++i) {
        if (l(i, j, k) == id) return k;
      }
    }
  }
  return -1;
}

TEST(Exclusion, CroppedMidVertebraRemovesExactlyOne) {
  const Phantom p = phantom(5);
  const int lo = min_k(p.labels, 5), hi = max_k(p.labels, 5);
  const LabelVolume cropped = crop_top(p.labels, lo + (hi - lo) / 3);
  const Exclusion e = exclude_unsupported(cropped, ExclusionRules{});
  EXPECT_EQ(e.excluded, (std::vector<std::int32_t>{5}));
  // A slightly clipped vertebra survives.
  const LabelVolume nicked = crop_top(p.labels, hi - 1);
  EXPECT_TRUE(exclude_unsupported(nicked, ExclusionRules{}).excluded.empty());
}

}  // namespace
}  // namespace mr2ct
