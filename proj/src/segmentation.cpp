#include "mr2ct/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mr2ct/distance.hpp"

namespace mr2ct {
namespace {

struct Box {
  Index3 lo{0, 0, 0};
  Index3 hi{-1, -1, -1};
  void add(int i, int j, int k) {
    const Index3 p{i, j, k};
    if (hi[0] < lo[0]) {
      lo = hi = p;
      return;
    }
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  int extent(int a) const { return hi[a] - lo[a] + 1; }
};

// Splits one component (voxels listed in `voxels`, bounding box `box`) into
// body and posterior. Returns the highest axis-1 index that is still body.
int body_plane(const std::vector<std::size_t>& voxels, const Box& box, const Geometry& g,
               double radius_mm) {
  const double r2 = radius_mm * radius_mm;
  const double min_sp = g.spacing.minCoeff();
  const int pad = static_cast<int>(std::ceil(radius_mm / min_sp)) + 1;
  Index3 lo, dims;
  for (int a = 0; a < 3; ++a) {
    lo[a] = box.lo[a] - pad;
    dims[a] = box.extent(a) + 2 * pad;
  }
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  auto local = [&](int i, int j, int k) {
    return static_cast<std::size_t>(i - lo[0]) +
           dims[0] * (static_cast<std::size_t>(j - lo[1]) + static_cast<std::size_t>(dims[1]) * (k - lo[2]));
  };
  std::vector<std::uint8_t> inside(n, 0);
  const int nx = g.dims[0], ny = g.dims[1];
  for (std::size_t v : voxels) {
    const int i = static_cast<int>(v % nx);
    const int j = static_cast<int>((v / nx) % ny);
    const int k = static_cast<int>(v / (static_cast<std::size_t>(nx) * ny));
    inside[local(i, j, k)] = 1;
  }
  // Opening by a ball: erode (distance to background > r), then dilate.
  std::vector<std::uint8_t> background(n);
  for (std::size_t m = 0; m < n; ++m) background[m] = inside[m] ? 0 : 1;
  const auto d_bg = squared_distance_transform(background, dims, g.spacing);
  std::vector<std::uint8_t> eroded(n);
  for (std::size_t m = 0; m < n; ++m) eroded[m] = d_bg[m] > r2 ? 1 : 0;
  const auto d_er = squared_distance_transform(eroded, dims, g.spacing);
  std::vector<std::uint8_t> opened(n);
  bool any = false;
  for (std::size_t m = 0; m < n; ++m) {
    opened[m] = inside[m] && d_er[m] <= r2 ? 1 : 0;
    any = any || opened[m];
  }
  if (!any) return box.hi[1];

  std::vector<std::int32_t> blobs;
  const int count = connected_components(opened, dims, blobs);
  std::vector<std::size_t> sizes(count + 1, 0);
  for (auto b : blobs) ++sizes[b];
  const auto largest = static_cast<std::int32_t>(
      std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin());
  int plane = box.lo[1];
  for (std::size_t m = 0; m < n; ++m) {
    if (blobs[m] != largest) continue;
    const int j = static_cast<int>((m / dims[0]) % dims[1]) + lo[1];
    plane = std::max(plane, j);
  }
  return plane;
}

}  // namespace

int connected_components(const std::vector<std::uint8_t>& mask, const Index3& dims,
                         std::vector<std::int32_t>& components) {
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (mask.size() != n) fail(Errc::kDimMismatch, "connected_components: mask size mismatch");
  components.assign(n, 0);
  const std::size_t sx = 1, sy = dims[0], sz = static_cast<std::size_t>(dims[0]) * dims[1];
  std::int32_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (!mask[start] || components[start] != 0) continue;
    components[start] = ++next;
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      const int i = static_cast<int>(v % sy);
      const int j = static_cast<int>((v / sy) % dims[1]);
      const int k = static_cast<int>(v / sz);
      for (int dk = -1; dk <= 1; ++dk) {
        const int kk = k + dk;
        if (kk < 0 || kk >= dims[2]) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          const int jj = j + dj;
          if (jj < 0 || jj >= dims[1]) continue;
          for (int di = -1; di <= 1; ++di) {
            const int ii = i + di;
            if (ii < 0 || ii >= dims[0]) continue;
            const std::size_t w = ii * sx + jj * sy + kk * sz;
            if (mask[w] && components[w] == 0) {
              components[w] = next;
              stack.push_back(w);
            }
          }
        }
      }
    }
  }
  return next;
}

Segmentation threshold_segment(const Volume& ct, const ThresholdParams& params) {
  double scale = 1.0;
  if (ct.space() == IntensitySpace::kHU) {
    scale = 1.0 / 1000.0;
  } else if (ct.space() != IntensitySpace::kNormalized) {
    fail(Errc::kWrongIntensitySpace, std::string("threshold_segment expects HU or normalized CT, got ") +
                                         intensity_space_name(ct.space()));
  }
  if (!(params.opening_radius_mm >= 0.0)) fail(Errc::kInvalidArgument, "opening radius must be >= 0");
  const Geometry& g = ct.geometry();
  const std::size_t n = ct.size();
  std::vector<std::uint8_t> mask(n);
  bool any = false;
  for (std::size_t m = 0; m < n; ++m) {
    mask[m] = std::clamp(ct.data()[m] * scale, -1.0, 1.0) > params.threshold ? 1 : 0;
    any = any || mask[m];
  }
  if (!any) fail(Errc::kEmptyBoneMask, "threshold_segment: no voxel above the bone threshold");

  std::vector<std::int32_t> comp;
  const int count = connected_components(mask, g.dims, comp);
  std::vector<std::vector<std::size_t>> voxels(count + 1);
  for (std::size_t m = 0; m < n; ++m) {
    if (comp[m] != 0) voxels[comp[m]].push_back(m);
  }
  struct Candidate {
    int component;
    double centroid_k;
  };
  std::vector<Candidate> kept;
  const std::size_t plane_size = static_cast<std::size_t>(g.dims[0]) * g.dims[1];
  for (int c = 1; c <= count; ++c) {
    if (voxels[c].size() < params.min_component) continue;
    double sum = 0.0;
    for (std::size_t v : voxels[c]) sum += static_cast<double>(v / plane_size);
    kept.push_back({c, sum / static_cast<double>(voxels[c].size())});
  }
  if (kept.empty()) {
    fail(Errc::kEmptyBoneMask, "threshold_segment: no bone component reaches " +
                                   std::to_string(params.min_component) + " voxels");
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Candidate& a, const Candidate& b) { return a.centroid_k < b.centroid_k; });

  Segmentation out{LabelVolume(g, LabelKind::kVertebra), LabelVolume(g, LabelKind::kSubregion)};
  for (std::size_t label = 0; label < kept.size(); ++label) {
    const auto& vox = voxels[kept[label].component];
    Box box;
    for (std::size_t v : vox) {
      box.add(static_cast<int>(v % g.dims[0]), static_cast<int>((v / g.dims[0]) % g.dims[1]),
              static_cast<int>(v / plane_size));
    }
    const int plane = body_plane(vox, box, g, params.opening_radius_mm);
    for (std::size_t v : vox) {
      const int j = static_cast<int>((v / g.dims[0]) % g.dims[1]);
      out.labels.data()[v] = static_cast<std::int32_t>(label + 1);
      out.subregions.data()[v] = j <= plane ? kBody : kPosterior;
    }
  }
  return out;
}

Exclusion exclude_unsupported(const LabelVolume& labels, const ExclusionRules& rules) {
  if (!(rules.max_clipped_fraction >= 0.0 && rules.max_clipped_fraction <= 1.0)) {
    fail(Errc::kInvalidConfig, "exclusion max_clipped_fraction must lie in [0, 1]");
  }
  const Geometry& g = labels.geometry();
  std::map<std::int32_t, Box> boxes;
  for (int k = 0; k < g.dims[2]; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i) {
        const std::int32_t id = labels(i, j, k);
        if (id != 0) boxes[id].add(i, j, k);
      }
    }
  }
  auto touches = [&](const Box& b, int a) { return b.lo[a] == 0 || b.hi[a] == g.dims[a] - 1; };

  std::set<std::int32_t> drop;
  for (const auto& [id, b] : boxes) {
    if (rules.sacrum_labels.count(id)) drop.insert(id);
  }
  for (int a = 0; a < 3; ++a) {
    std::vector<int> ref;
    for (const auto& [id, b] : boxes) {
      if (!touches(b, a) && !rules.sacrum_labels.count(id)) ref.push_back(b.extent(a));
    }
    if (ref.empty()) continue;
    std::nth_element(ref.begin(), ref.begin() + ref.size() / 2, ref.end());
    double median = ref[ref.size() / 2];
    if (ref.size() % 2 == 0) {
      const int lower = *std::max_element(ref.begin(), ref.begin() + ref.size() / 2);
      median = 0.5 * (median + lower);
    }
    for (const auto& [id, b] : boxes) {
      if (!touches(b, a)) continue;
      const double clipped = 1.0 - b.extent(a) / median;
      if (clipped >= rules.max_clipped_fraction) drop.insert(id);
    }
  }

  Exclusion out{labels, std::vector<std::int32_t>(drop.begin(), drop.end())};
  if (!drop.empty()) {
    for (auto& v : out.labels.data()) {
      if (v != 0 && drop.count(v)) v = 0;
    }
  }
  return out;
}

}  // namespace mr2ct
