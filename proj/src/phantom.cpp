#include "mr2ct/phantom.hpp"

#include <cmath>
#include <numbers>

#include "mr2ct/preprocess.hpp"
#include "mr2ct/random.hpp"

namespace mr2ct {
namespace {

constexpr double kMargin = 16.0;  // mm of tissue around the column

struct Layout {
  double x_center;
  double y_center;
  double z_start;   // craniocaudal start of the first body
  double column_length;
};

Layout layout(const PhantomConfig& cfg) {
  Layout l;
  l.x_center = kMargin + cfg.body_radius + std::abs(cfg.curvature);
  l.y_center = kMargin + cfg.body_radius;
  l.z_start = kMargin + cfg.disc_gap;
  l.column_length = cfg.n_vertebrae * (cfg.body_height + cfg.disc_gap);
  return l;
}

double column_x(const PhantomConfig& cfg, const Layout& l, double z) {
  if (cfg.curvature == 0.0) return l.x_center;
  return l.x_center +
         cfg.curvature * std::sin(2.0 * std::numbers::pi * (z - l.z_start) / l.column_length);
}

struct Sample {
  std::int32_t label = 0;
  std::int32_t subregion = 0;
  bool cortical = false;
  bool disc = false;
  bool tissue = false;
};

}  // namespace

void PhantomConfig::validate() const {
  if (n_vertebrae < 2) fail(Errc::kInvalidConfig, "phantom: n_vertebrae must be >= 2");
  const double lengths[] = {body_radius, body_height, disc_gap, process_length, process_width, spacing};
  for (double v : lengths) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      fail(Errc::kInvalidConfig, "phantom: all lengths must be positive");
    }
  }
  if (!(noise_sigma >= 0.0)) fail(Errc::kInvalidConfig, "phantom: noise_sigma must be >= 0");
  if (!std::isfinite(curvature)) fail(Errc::kInvalidConfig, "phantom: curvature must be finite");
  if (body_radius <= tissue::kCorticalThickness || body_height <= 2 * tissue::kCorticalThickness) {
    fail(Errc::kInvalidConfig, "phantom: body too small for the cortical shell");
  }
}

Geometry phantom_geometry(const PhantomConfig& cfg) {
  cfg.validate();
  const Layout l = layout(cfg);
  const double extent[3] = {2.0 * l.x_center, l.y_center + cfg.body_radius + cfg.process_length + kMargin,
                            2.0 * l.z_start + l.column_length};
  Geometry g;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = static_cast<int>(std::ceil(extent[a] / cfg.spacing));
    g.spacing[a] = cfg.spacing;
  }
  return g;
}

Vec3 phantom_body_center(const PhantomConfig& cfg, int vertebra_id) {
  const Layout l = layout(cfg);
  const double z = l.z_start + (vertebra_id - 1) * (cfg.body_height + cfg.disc_gap) + cfg.body_height / 2;
  return {column_x(cfg, l, z), l.y_center, z};
}

Vec3 phantom_process_center(const PhantomConfig& cfg, int vertebra_id) {
  const Vec3 body = phantom_body_center(cfg, vertebra_id);
  const double y0 = body.y() + 0.8 * cfg.body_radius;
  const double y1 = body.y() + cfg.body_radius + cfg.process_length;
  return {body.x(), 0.5 * (y0 + y1), body.z()};
}

Phantom generate_phantom(const PhantomConfig& cfg) {
  const Geometry g = phantom_geometry(cfg);
  const Layout l = layout(cfg);
  const double r = cfg.body_radius;
  const double hh = cfg.body_height / 2;
  const double t = tissue::kCorticalThickness;
  const double process_half_h = cfg.body_height / 4;
  const double process_half_w = cfg.process_width / 2;
  const double pitch = cfg.body_height + cfg.disc_gap;
  const double torso_a = g.dims[0] * cfg.spacing / 2 - 2.0;
  const double torso_b = g.dims[1] * cfg.spacing / 2 - 2.0;
  const Vec3 torso_c(g.dims[0] * cfg.spacing / 2, g.dims[1] * cfg.spacing / 2, 0);

  Phantom ph{Volume(g, IntensitySpace::kMRRaw), Volume(g, IntensitySpace::kHU),
             LabelVolume(g, LabelKind::kVertebra), LabelVolume(g, LabelKind::kSubregion)};

  auto classify = [&](const Vec3& p) {
    Sample s;
    const double dxt = (p.x() - torso_c.x()) / torso_a, dyt = (p.y() - torso_c.y()) / torso_b;
    s.tissue = dxt * dxt + dyt * dyt <= 1.0;
    // Nearest vertebra slot along the column.
    const int slot = static_cast<int>(std::floor((p.z() - l.z_start + cfg.disc_gap / 2) / pitch));
    for (int v = std::max(0, slot - 1); v <= std::min(cfg.n_vertebrae - 1, slot + 1); ++v) {
      const Vec3 c = phantom_body_center(cfg, v + 1);
      const double dx = p.x() - c.x(), dy = p.y() - c.y(), dz = p.z() - c.z();
      const double e_outer = (dx * dx + dy * dy) / (r * r) + dz * dz / (hh * hh);
      const double e_inner =
          (dx * dx + dy * dy) / ((r - t) * (r - t)) + dz * dz / ((hh - t) * (hh - t));
      const bool in_body = e_outer <= 1.0;
      const bool in_box = std::abs(dx) <= process_half_w && dy >= 0.8 * r &&
                          dy <= r + cfg.process_length && std::abs(dz) <= process_half_h;
      if (in_body || in_box) {
        s.label = v + 1;
        s.subregion = dy <= r ? kBody : kPosterior;
        const bool inner_body = e_inner <= 1.0;
        const bool inner_box = std::abs(dx) <= process_half_w - t / 2 && dy >= 0.8 * r &&
                               dy <= r + cfg.process_length - t / 2 &&
                               std::abs(dz) <= process_half_h - t / 2;
        s.cortical = !(inner_body || inner_box);
        return s;
      }
    }
    // Intervertebral discs between consecutive bodies.
    for (int v = std::max(0, slot - 1); v <= std::min(cfg.n_vertebrae - 2, slot); ++v) {
      const Vec3 a = phantom_body_center(cfg, v + 1), b = phantom_body_center(cfg, v + 2);
      const Vec3 c = 0.5 * (a + b);
      const double rd = 0.9 * r, hd = cfg.disc_gap / 2 + 1.0;
      const double dx = p.x() - c.x(), dy = p.y() - c.y(), dz = p.z() - c.z();
      if ((dx * dx + dy * dy) / (rd * rd) + dz * dz / (hd * hd) <= 1.0) {
        s.disc = true;
        return s;
      }
    }
    return s;
  };

  for (int k = 0; k < g.dims[2]; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i) {
        const Sample s = classify(g.to_world(i, j, k));
        float ct = tissue::kCtAir, mr = tissue::kMrAir;
        if (s.label != 0) {
          ct = s.cortical ? tissue::kCtCortical : tissue::kCtMarrow;
          mr = s.cortical ? tissue::kMrCortical : tissue::kMrMarrow;
        } else if (s.disc) {
          ct = tissue::kCtDisc;
          mr = tissue::kMrDisc;
        } else if (s.tissue) {
          ct = tissue::kCtSoft;
          mr = tissue::kMrSoft;
        }
        ph.ct(i, j, k) = ct;
        ph.mr(i, j, k) = mr;
        ph.labels(i, j, k) = s.label;
        ph.subregions(i, j, k) = s.subregion;
      }
    }
  }

  if (cfg.noise_sigma > 0.0) {
    Rng ct_rng(derive_seed(cfg.seed, 1));
    Rng mr_rng(derive_seed(cfg.seed, 2));
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (auto& v : ph.ct.data()) v = static_cast<float>(v + noise(ct_rng));
    for (auto& v : ph.mr.data()) v = static_cast<float>(std::max(0.0, v + noise(mr_rng)));
  }
  return ph;
}

Misaligned misalign(const Volume& ct, const LabelVolume& labels, const LabelVolume* subregions,
                    const MisalignSpec& spec) {
  spec.global.validate();
  if (!ct.geometry().same_grid(labels.geometry()) ||
      (subregions != nullptr && !subregions->geometry().same_grid(labels.geometry()))) {
    fail(Errc::kGeometryMismatch, "misalign: inputs are on different grids");
  }
  const Geometry& g = ct.geometry();
  // Inverse maps, each from output world to input world.
  const Mat4 global_inv = spec.global.inverse().matrix();
  Misaligned out{resample(ct, g, global_inv), resample(labels, g, global_inv),
                 subregions != nullptr ? resample(*subregions, g, global_inv) : LabelVolume()};
  if (spec.per_vertebra.empty()) return out;

  struct Local {
    std::int32_t id;
    Mat4 inv;
  };
  std::vector<Local> locals;
  for (const auto& [id, t] : spec.per_vertebra) {
    t.validate();
    locals.push_back({id, spec.global.then(t).inverse().matrix()});
  }
  const Mat4 to_index = g.affine().inverse();
  const float air = default_fill(ct.space());
  // Remove globally placed copies of perturbed vertebrae, then re-place them.
  for (std::size_t n = 0; n < out.labels.size(); ++n) {
    const std::int32_t id = out.labels.data()[n];
    if (id != 0 && spec.per_vertebra.count(id) != 0) {
      out.labels.data()[n] = 0;
      if (subregions != nullptr) out.subregions.data()[n] = 0;
      out.ct.data()[n] = tissue::kCtSoft;
    }
  }
  for (int k = 0; k < g.dims[2]; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i) {
        const Vec3 p = g.to_world(i, j, k);
        for (const auto& local : locals) {
          const Vec3 src = (to_index * (local.inv * p.homogeneous())).head<3>();
          if (sample_nearest(labels, src, 0) == local.id) {
            out.labels(i, j, k) = local.id;
            if (subregions != nullptr) out.subregions(i, j, k) = sample_nearest(*subregions, src, 0);
            out.ct(i, j, k) = sample_trilinear(ct, src, air);
            break;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace mr2ct
