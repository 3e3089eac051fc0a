#include <cstring>
#include <fstream>

#include <gtest/gtest.h>
#include <zlib.h>

#include "mr2ct/nifti.hpp"
#include "test_support.hpp"

namespace mr2ct {
namespace {

using test::TempDir;

std::vector<std::uint8_t> minimal_file(const std::vector<float>& voxels, float slope = 1.0f,
                                       float inter = 0.0f) {
  std::vector<std::uint8_t> b(352 + voxels.size() * 4, 0);
  auto put = [&](int off, auto v) { std::memcpy(b.data() + off, &v, sizeof(v)); };
  put(0, std::int32_t{348});
  const std::int16_t dim[8] = {3, 2, 2, static_cast<std::int16_t>(voxels.size() / 4), 1, 1, 1, 1};
  for (int k = 0; k < 8; ++k) put(40 + 2 * k, dim[k]);
  put(70, std::int16_t{16});
  put(72, std::int16_t{32});
  for (int k = 0; k < 8; ++k) put(76 + 4 * k, 1.0f);
  put(108, 352.0f);
  put(112, slope);
  put(116, inter);
  std::memcpy(b.data() + 344, "n+1\0", 4);
  std::memcpy(b.data() + 352, voxels.data(), voxels.size() * 4);
  return b;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

TEST(Nifti, MinimalFileReadsInWriteOrder) {
  TempDir dir;
  const std::vector<float> v{0, 1, 2, 3, 4, 5, 6, 7};
  write_bytes(dir / "m.nii", minimal_file(v));
  const Volume vol = nifti::read_volume(dir / "m.nii");
  ASSERT_EQ(vol.size(), 8u);
  EXPECT_EQ(vol(1, 0, 0), 1.0f);
  EXPECT_EQ(vol(0, 1, 0), 2.0f);
  EXPECT_EQ(vol(1, 1, 1), 7.0f);
}

TEST(Nifti, SlopeAndInterceptApplied) {
  TempDir dir;
  write_bytes(dir / "s.nii", minimal_file({3, 3, 3, 3, 3, 3, 3, 3}, 2.0f, 10.0f));
  EXPECT_EQ(nifti::read_volume(dir / "s.nii")(0, 0, 0), 16.0f);
  write_bytes(dir / "z.nii", minimal_file({3, 3, 3, 3, 3, 3, 3, 3}, 0.0f, 0.0f));
  EXPECT_EQ(nifti::read_volume(dir / "z.nii")(0, 0, 0), 3.0f);
}

TEST(Nifti, LabelsAreNeverScaled) {
  TempDir dir;
  write_bytes(dir / "s.nii", minimal_file({3, 3, 3, 3, 3, 3, 3, 3}, 2.0f, 10.0f));
  EXPECT_EQ(nifti::read_labels(dir / "s.nii")(0, 0, 0), 3);
}

TEST(Nifti, RejectsBadMagicDatatypeAndTruncation) {
  TempDir dir;
  auto bytes = minimal_file({0, 1, 2, 3, 4, 5, 6, 7});
  auto bad = bytes;
  std::memcpy(bad.data() + 344, "ni1\0", 4);
  write_bytes(dir / "magic.nii", bad);
  try {
    nifti::read_volume(dir / "magic.nii");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kBadMagic);
  }
  bad = bytes;
  const std::int16_t dt = 64;
  std::memcpy(bad.data() + 70, &dt, 2);
  write_bytes(dir / "dt.nii", bad);
  try {
    nifti::read_volume(dir / "dt.nii");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kUnsupportedDatatype);
    EXPECT_NE(std::string(e.what()).find("70"), std::string::npos);
  }
  bad = bytes;
  bad.resize(bad.size() - 3);
  write_bytes(dir / "trunc.nii", bad);
  try {
    nifti::read_volume(dir / "trunc.nii");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kTruncatedPayload);
  }
}

TEST(Nifti, BigEndianIsDetected) {
  TempDir dir;
  auto b = minimal_file({1.5f, 2, 3, 4, 5, 6, 7, 8});
  auto swap = [&](int off, int n) { std::reverse(b.begin() + off, b.begin() + off + n); };
  swap(0, 4);
  for (int k = 0; k < 8; ++k) swap(40 + 2 * k, 2);
  swap(70, 2);
  swap(72, 2);
  for (int k = 0; k < 8; ++k) swap(76 + 4 * k, 4);
  swap(108, 4);
  swap(112, 4);
  swap(116, 4);
  for (int k = 0; k < 8; ++k) swap(352 + 4 * k, 4);
  write_bytes(dir / "be.nii", b);
  const Volume v = nifti::read_volume(dir / "be.nii");
  EXPECT_EQ(v(0, 0, 0), 1.5f);
  EXPECT_EQ(v(1, 1, 1), 8.0f);
}

TEST(Nifti, Int16LabelsPreserveEveryInteger) {
  TempDir dir;
  LabelVolume labels(test::make_geometry({16, 16, 16}));
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> d(0, 32000);
  for (auto& v : labels.data()) v = d(rng);
  nifti::write_labels(labels, dir / "l.nii.gz");
  EXPECT_EQ(nifti::read_labels(dir / "l.nii.gz").data(), labels.data());
}

TEST(Nifti, RotatedAffineSurvivesRoundTrip) {
  TempDir dir;
  Geometry g = test::make_geometry({5, 6, 7}, Vec3(0.7, 1.1, 2.5), Vec3(-123.4, 87.65, -301.2));
  g.direction = test::rotation_xyz(0, 0, 10.0 * M_PI / 180.0);
  Volume v(g, IntensitySpace::kHU, 1.0f);
  nifti::write_volume(v, dir / "r.nii");
  const Geometry back = nifti::read_header(dir / "r.nii").geometry();
  EXPECT_LT((back.affine() - g.affine()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Nifti, ReferenceWriterFileMatchesPayloadAndAffine) {
  const auto oracle = test::oracles()["nifti"];
  nifti::Header h;
  const auto payload = nifti::read_payload_bytes(test::data_dir() / "reference_int16.nii.gz", &h);
  const std::string raw = test::read_file(test::data_dir() / "reference_int16.raw");
  ASSERT_EQ(payload.size(), raw.size());
  EXPECT_EQ(std::memcmp(payload.data(), raw.data(), raw.size()), 0);
  EXPECT_EQ(h.datatype, nifti::Datatype::kInt16);
  const Mat4 a = h.affine();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(a(r, c), oracle["affine"][r][c].get<double>(), 1e-6);
  }
}

TEST(Nifti, WriteIsAtomicAndLeavesNoTemporaries) {
  TempDir dir;
  Volume v(test::make_geometry({4, 4, 4}), IntensitySpace::kHU, 5.0f);
  nifti::write_volume(v, dir / "a.nii.gz");
  nifti::write_volume(v, dir / "a.nii.gz");
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    (void)e;
    ++n;
  }
  EXPECT_EQ(n, 1);
}

TEST(Nifti, SformPreferredOverQform) {
  nifti::Header h;
  h.dim = {3, 2, 2, 2, 1, 1, 1, 1};
  h.qform_code = 1;
  h.sform_code = 1;
  h.qoffset_x = 5;
  h.srow_x = {2, 0, 0, -7};
  EXPECT_EQ(h.affine()(0, 3), -7.0);
  EXPECT_EQ(h.affine()(0, 0), 2.0);
}

}  // namespace
}  // namespace mr2ct
