#include "mr2ct/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mr2ct/preprocess.hpp"

namespace mr2ct {
namespace {

// Uniform cubic B-spline basis weights for fractional position t.
std::array<double, 4> bspline_weights(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {(1 - t) * (1 - t) * (1 - t) / 6.0, (3 * t3 - 6 * t2 + 4) / 6.0,
          (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0, t3 / 6.0};
}

struct AxisTaps {
  std::vector<std::array<int, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

AxisTaps axis_taps(int n, int g) {
  AxisTaps taps;
  taps.index.resize(n);
  taps.weight.resize(n);
  for (int i = 0; i < n; ++i) {
    const double u = n > 1 ? static_cast<double>(i) * (g - 1) / (n - 1) : 0.0;
    int base = static_cast<int>(std::floor(u));
    if (base >= g - 1) base = g - 2;
    const double t = u - base;
    taps.weight[i] = bspline_weights(t);
    for (int m = 0; m < 4; ++m) taps.index[i][m] = std::clamp(base - 1 + m, 0, g - 1);
  }
  return taps;
}

void check_normalized(std::span<const float> values) {
  for (float v : values) {
    if (!(v >= -1.0f && v <= 1.0f)) {
      fail(Errc::kNotNormalized, "intensity_jitter expects values in [-1, 1]");
    }
  }
}

template <typename Values>
void jitter_in_place(Values& values, const JitterDraw& d) {
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  for (auto& v : values) {
    v = static_cast<float>(std::clamp(d.contrast * (v - mean) + mean + d.brightness, -1.0, 1.0));
  }
}

}  // namespace

void DeformSpec::validate() const {
  for (int g : control_grid) {
    if (g < 2) fail(Errc::kInvalidConfig, "elastic_deform: control grid needs >= 2 points per axis");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    fail(Errc::kInvalidConfig, "elastic_deform: sigma must be >= 0");
  }
}

std::array<Grid3<float>, 3> displacement_field(const Geometry& geometry, const DeformSpec& spec) {
  spec.validate();
  const Index3& cg = spec.control_grid;
  const std::size_t n_ctrl = static_cast<std::size_t>(cg[0]) * cg[1] * cg[2];
  Rng rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::array<std::vector<double>, 3> ctrl;
  for (auto& c : ctrl) {
    c.resize(n_ctrl);
    for (auto& v : c) v = spec.sigma * unit(rng);
  }
  const AxisTaps tx = axis_taps(geometry.dims[0], cg[0]);
  const AxisTaps ty = axis_taps(geometry.dims[1], cg[1]);
  const AxisTaps tz = axis_taps(geometry.dims[2], cg[2]);

  std::array<Grid3<float>, 3> field{Grid3<float>(geometry), Grid3<float>(geometry),
                                    Grid3<float>(geometry)};
  auto ctrl_at = [&](int comp, int a, int b, int c) {
    return ctrl[comp][static_cast<std::size_t>(a) + cg[0] * (static_cast<std::size_t>(b) + cg[1] * c)];
  };
  for (int k = 0; k < geometry.dims[2]; ++k) {
    for (int j = 0; j < geometry.dims[1]; ++j) {
      for (int i = 0; i < geometry.dims[0]; ++i) {
        double d[3] = {0, 0, 0};
        for (int c = 0; c < 4; ++c) {
          for (int b = 0; b < 4; ++b) {
            const double wbc = tz.weight[k][c] * ty.weight[j][b];
            for (int a = 0; a < 4; ++a) {
              const double w = wbc * tx.weight[i][a];
              for (int comp = 0; comp < 3; ++comp) {
                d[comp] += w * ctrl_at(comp, tx.index[i][a], ty.index[j][b], tz.index[k][c]);
              }
            }
          }
        }
        for (int comp = 0; comp < 3; ++comp) field[comp](i, j, k) = static_cast<float>(d[comp]);
      }
    }
  }
  return field;
}

Deformed elastic_deform(const std::vector<Volume>& volumes, const std::vector<LabelVolume>& labels,
                        const DeformSpec& spec) {
  spec.validate();
  const Geometry* ref = !volumes.empty() ? &volumes.front().geometry()
                                         : (!labels.empty() ? &labels.front().geometry() : nullptr);
  if (ref == nullptr) return {};
  for (const auto& v : volumes) {
    if (!v.geometry().same_grid(*ref)) fail(Errc::kGeometryMismatch, "elastic_deform: grid mismatch");
  }
  for (const auto& l : labels) {
    if (!l.geometry().same_grid(*ref)) fail(Errc::kGeometryMismatch, "elastic_deform: grid mismatch");
  }
  const auto field = displacement_field(*ref, spec);
  // Displacement in index units: D^T d / spacing.
  const Mat3 to_index = ref->spacing.cwiseInverse().asDiagonal() * ref->direction.transpose();

  Deformed out;
  for (const auto& v : volumes) out.volumes.emplace_back(v.geometry(), v.space());
  for (const auto& l : labels) out.labels.emplace_back(l.geometry(), l.kind());
  for (int k = 0; k < ref->dims[2]; ++k) {
    for (int j = 0; j < ref->dims[1]; ++j) {
      for (int i = 0; i < ref->dims[0]; ++i) {
        const Vec3 d(field[0](i, j, k), field[1](i, j, k), field[2](i, j, k));
        const Vec3 q = Vec3(i, j, k) + to_index * d;
        for (std::size_t n = 0; n < volumes.size(); ++n) {
          out.volumes[n](i, j, k) =
              sample_trilinear(volumes[n], q, default_fill(volumes[n].space()));
        }
        for (std::size_t n = 0; n < labels.size(); ++n) {
          out.labels[n](i, j, k) = sample_nearest(labels[n], q, 0);
        }
      }
    }
  }
  return out;
}

JitterDraw draw_jitter(double brightness, double contrast, Rng& rng) {
  if (brightness < 0 || contrast < 0) fail(Errc::kInvalidArgument, "jitter ranges must be >= 0");
  std::uniform_real_distribution<double> a(1.0 - contrast, 1.0 + contrast);
  std::uniform_real_distribution<double> b(-brightness, brightness);
  JitterDraw d;
  d.contrast = a(rng);
  d.brightness = b(rng);
  return d;
}

Image2D apply_jitter(const Image2D& image, const JitterDraw& draw) {
  check_normalized(image.data);
  Image2D out = image;
  if (!out.data.empty()) jitter_in_place(out.data, draw);
  return out;
}

Volume apply_jitter(const Volume& volume, const JitterDraw& draw) {
  if (volume.space() != IntensitySpace::kNormalized) {
    fail(Errc::kNotNormalized, "intensity_jitter expects a normalized volume");
  }
  check_normalized(volume.values());
  Volume out = volume;
  if (out.size() > 0) jitter_in_place(out.data(), draw);
  return out;
}

Image2D intensity_jitter(const Image2D& image, std::uint64_t seed, double brightness,
                         double contrast) {
  Rng rng(seed);
  return apply_jitter(image, draw_jitter(brightness, contrast, rng));
}

Volume intensity_jitter(const Volume& volume, std::uint64_t seed, double brightness,
                        double contrast) {
  Rng rng(seed);
  return apply_jitter(volume, draw_jitter(brightness, contrast, rng));
}

}  // namespace mr2ct
