#include "mr2ct/registration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "mr2ct/preprocess.hpp"

namespace mr2ct {

LandmarkSet::LandmarkSet(std::vector<Landmark> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const Landmark& a, const Landmark& b) { return a.vertebra_id < b.vertebra_id; });
  for (std::size_t n = 0; n < entries_.size(); ++n) {
    if (n > 0 && entries_[n].vertebra_id == entries_[n - 1].vertebra_id) {
      fail(Errc::kInvalidArgument,
           "duplicate vertebra id " + std::to_string(entries_[n].vertebra_id) + " in landmark set");
    }
    if (!entries_[n].body.allFinite() ||
        (entries_[n].spinous && !entries_[n].spinous->allFinite())) {
      fail(Errc::kInvalidArgument, "landmark coordinates must be finite");
    }
  }
}

const Landmark* LandmarkSet::find(std::int32_t id) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                             [](const Landmark& l, std::int32_t v) { return l.vertebra_id < v; });
  return it != entries_.end() && it->vertebra_id == id ? &*it : nullptr;
}

bool LandmarkSet::has_all_spinous() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const Landmark& l) { return l.spinous.has_value(); });
}

LandmarkSet LandmarkSet::transformed(const RigidTransform& t) const {
  std::vector<Landmark> out = entries_;
  for (auto& l : out) {
    l.body = t.apply(l.body);
    if (l.spinous) l.spinous = t.apply(*l.spinous);
  }
  return LandmarkSet(std::move(out));
}

LandmarkSet extract_centroids(const LabelVolume& labels, const LabelVolume* subregions) {
  if (subregions != nullptr && !subregions->geometry().same_grid(labels.geometry())) {
    fail(Errc::kGeometryMismatch, "extract_centroids: labels and subregions differ in geometry");
  }
  struct Acc {
    Vec3 body = Vec3::Zero();
    std::size_t n_body = 0;
    Vec3 post = Vec3::Zero();
    std::size_t n_post = 0;
  };
  std::map<std::int32_t, Acc> acc;
  const Geometry& g = labels.geometry();
  for (int k = 0; k < g.dims[2]; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i) {
        const std::int32_t id = labels(i, j, k);
        if (id == 0) continue;
        Acc& a = acc[id];
        // Accumulate voxel indices; mapped to world once per label.
        const Vec3 idx(i, j, k);
        if (subregions == nullptr) {
          a.body += idx;
          ++a.n_body;
        } else {
          const std::int32_t s = (*subregions)(i, j, k);
          if (s == kBody) {
            a.body += idx;
            ++a.n_body;
          } else if (s == kPosterior) {
            a.post += idx;
            ++a.n_post;
          }
        }
      }
    }
  }
  if (acc.empty()) fail(Errc::kEmptyLabel, "extract_centroids: label volume has no foreground");
  std::vector<Landmark> out;
  for (const auto& [id, a] : acc) {
    if (a.n_body == 0) {
      fail(Errc::kEmptyLabel, "extract_centroids: vertebra " + std::to_string(id) +
                                  " has no body voxels");
    }
    Landmark l;
    l.vertebra_id = id;
    l.body = g.to_world(a.body / static_cast<double>(a.n_body));
    if (subregions != nullptr && a.n_post > 0) {
      l.spinous = g.to_world(a.post / static_cast<double>(a.n_post));
    }
    out.push_back(l);
  }
  return LandmarkSet(std::move(out));
}

LandmarkSet regenerate_landmarks(const LabelVolume& segmentation, const LabelVolume& subregions) {
  return extract_centroids(segmentation, &subregions);
}

const char* registration_mode_name(RegistrationMode mode) {
  switch (mode) {
    case RegistrationMode::kNone: return "none";
    case RegistrationMode::kOnePoint: return "one-point";
    case RegistrationMode::kTwoPoint: return "two-point";
  }
  return "none";
}

RegistrationMode parse_registration_mode(const std::string& text) {
  if (text == "none") return RegistrationMode::kNone;
  if (text == "one-point") return RegistrationMode::kOnePoint;
  if (text == "two-point") return RegistrationMode::kTwoPoint;
  throw ValidationError("unknown registration mode '" + text +
                        "' (expected none|one-point|two-point)");
}

FitReport fit_rigid_points(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size()) fail(Errc::kLengthMismatch, "fit_rigid: point count mismatch");
  if (src.size() < 3) {
    fail(Errc::kTooFewPoints, "fit_rigid: need at least 3 matched points, got " +
                                  std::to_string(src.size()));
  }
  const double n = static_cast<double>(src.size());
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t k = 0; k < src.size(); ++k) {
    cs += src[k];
    cd += dst[k];
  }
  cs /= n;
  cd /= n;
  Mat3 h = Mat3::Zero();
  for (std::size_t k = 0; k < src.size(); ++k) h += (src[k] - cs) * (dst[k] - cd).transpose();

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if ((v * u.transpose()).determinant() < 0) v.col(2) *= -1.0;

  FitReport report;
  report.transform.rotation = v * u.transpose();
  report.transform.translation = cd - report.transform.rotation * cs;
  report.singular_values = svd.singularValues();
  const Vec3& sv = report.singular_values;
  report.collinear = !(sv[1] >= 1e-6 * sv[0]) || sv[0] == 0.0;
  double ss = 0.0;
  for (std::size_t k = 0; k < src.size(); ++k) {
    ss += (report.transform.apply(src[k]) - dst[k]).squaredNorm();
  }
  report.rms = std::sqrt(ss / n);
  report.n_points = src.size();
  return report;
}

FitReport fit_rigid(const LandmarkSet& src, const LandmarkSet& dst, RegistrationMode mode) {
  if (mode == RegistrationMode::kNone) {
    FitReport identity;
    return identity;
  }
  std::vector<Vec3> ps, pd;
  std::vector<std::int32_t> ids;
  for (const auto& a : src.entries()) {
    const Landmark* b = dst.find(a.vertebra_id);
    if (b == nullptr) continue;
    ids.push_back(a.vertebra_id);
    ps.push_back(a.body);
    pd.push_back(b->body);
    if (mode == RegistrationMode::kTwoPoint) {
      if (!a.spinous || !b->spinous) {
        fail(Errc::kMissingSpinous, "fit_rigid: two-point mode needs spinous landmarks for vertebra " +
                                        std::to_string(a.vertebra_id) + " on both sides");
      }
      ps.push_back(*a.spinous);
      pd.push_back(*b->spinous);
    }
  }
  FitReport report = fit_rigid_points(ps, pd);
  report.matched_ids = std::move(ids);
  return report;
}

Volume apply_rigid(const Volume& moving, const RigidTransform& t, const Geometry& target) {
  t.validate();
  return resample(moving, target, t.inverse().matrix());
}

LabelVolume apply_rigid(const LabelVolume& moving, const RigidTransform& t, const Geometry& target) {
  t.validate();
  return resample(moving, target, t.inverse().matrix());
}

LandmarkSet read_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::kIoFailure, "cannot open landmark file " + path.string());
  std::vector<Landmark> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (!ss.eof()) {
      fail(Errc::kInvalidArgument,
           path.string() + ":" + std::to_string(line_no) + ": non-numeric landmark field");
    }
    if (v.empty()) continue;
    if (v.size() != 4 && v.size() != 7) {
      fail(Errc::kInvalidArgument, path.string() + ":" + std::to_string(line_no) +
                                       ": expected 'id x y z [sx sy sz]'");
    }
    Landmark l;
    l.vertebra_id = static_cast<std::int32_t>(v[0]);
    l.body = Vec3(v[1], v[2], v[3]);
    if (v.size() == 7) l.spinous = Vec3(v[4], v[5], v[6]);
    out.push_back(l);
  }
  return LandmarkSet(std::move(out));
}

void write_landmarks(const LandmarkSet& set, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) fail(Errc::kIoFailure, "cannot write landmark file " + path.string());
    out << "# vertebra_id x y z [sx sy sz] (world mm)\n" << std::setprecision(17);
    for (const auto& l : set.entries()) {
      out << l.vertebra_id << ' ' << l.body.x() << ' ' << l.body.y() << ' ' << l.body.z();
      if (l.spinous) out << ' ' << l.spinous->x() << ' ' << l.spinous->y() << ' ' << l.spinous->z();
      out << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace mr2ct
