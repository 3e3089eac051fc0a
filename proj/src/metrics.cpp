#include "mr2ct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "mr2ct/distance.hpp"

namespace mr2ct {
namespace {

using Plane = std::vector<double>;  // row-major, shape carried separately

struct Map2 {
  int rows = 0;
  int cols = 0;
  Plane v;
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

void check_shape(const Image2D& a, const Image2D& b, const char* what) {
  if (!a.same_shape(b)) {
    fail(Errc::kShapeMismatch, std::string(what) + ": image shapes differ (" + std::to_string(a.rows) +
                                   "x" + std::to_string(a.cols) + " vs " + std::to_string(b.rows) +
                                   "x" + std::to_string(b.cols) + ")");
  }
  if (a.size() == 0) fail(Errc::kShapeMismatch, std::string(what) + ": empty image");
}

Map2 to_map(const Image2D& img) {
  Map2 m{img.rows, img.cols, Plane(img.data.begin(), img.data.end())};
  return m;
}

Map2 product(const Map2& a, const Map2& b) {
  Map2 out{a.rows, a.cols, Plane(a.v.size())};
  for (std::size_t n = 0; n < out.v.size(); ++n) out.v[n] = a.v[n] * b.v[n];
  return out;
}

// 'valid' correlation with the separable kernel k (x) k; k is symmetric so
// this equals convolution.
Map2 filter_valid(const Map2& in, const std::vector<double>& k) {
  const int w = static_cast<int>(k.size());
  Map2 tmp{in.rows, in.cols - w + 1, {}};
  tmp.v.assign(static_cast<std::size_t>(tmp.rows) * tmp.cols, 0.0);
  for (int r = 0; r < tmp.rows; ++r) {
    for (int c = 0; c < tmp.cols; ++c) {
      double s = 0.0;
      for (int t = 0; t < w; ++t) s += k[t] * in.at(r, c + t);
      tmp.at(r, c) = s;
    }
  }
  Map2 out{in.rows - w + 1, tmp.cols, {}};
  out.v.assign(static_cast<std::size_t>(out.rows) * out.cols, 0.0);
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      double s = 0.0;
      for (int t = 0; t < w; ++t) s += k[t] * tmp.at(r + t, c);
      out.at(r, c) = s;
    }
  }
  return out;
}

Map2 downsample2(const Map2& in) {
  Map2 out{(in.rows + 1) / 2, (in.cols + 1) / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.rows) * out.cols);
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) out.at(r, c) = in.at(2 * r, 2 * c);
  }
  return out;
}

std::vector<double> gaussian_kernel(int radius, double sigma) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    k[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    sum += k[t + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace

Image2D spine_mask(const Image2D& image, const Label2D& labels, double radius) {
  if (!image.same_shape(labels)) fail(Errc::kShapeMismatch, "spine_mask: image and labels differ in shape");
  if (!(radius >= 0.0)) fail(Errc::kInvalidArgument, "spine_mask: radius must be >= 0");
  const auto d2 = squared_distance_to_labels(labels);
  Image2D out = image;
  const double r2 = radius * radius;
  for (std::size_t n = 0; n < out.data.size(); ++n) {
    if (d2[n] > r2) out.data[n] = 0.0f;
  }
  return out;
}

double l1(const Image2D& a, const Image2D& b) {
  check_shape(a, b, "l1");
  double s = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) s += std::abs(static_cast<double>(a.data[n]) - b.data[n]);
  return s / static_cast<double>(a.size());
}

double mse(const Image2D& a, const Image2D& b) {
  check_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    const double d = static_cast<double>(a.data[n]) - b.data[n];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double psnr_from_mse(double m, double peak) {
  if (!(peak > 0.0)) fail(Errc::kInvalidArgument, "psnr: peak must be > 0");
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

double psnr(const Image2D& a, const Image2D& b, double peak) { return psnr_from_mse(mse(a, b), peak); }

double ssim(const Image2D& a, const Image2D& b, double peak) {
  check_shape(a, b, "ssim");
  if (!(peak > 0.0)) fail(Errc::kInvalidArgument, "ssim: peak must be > 0");
  constexpr double kSigma = 1.5, kTruncate = 3.5;
  const int radius = static_cast<int>(kTruncate * kSigma + 0.5);
  const int win = 2 * radius + 1;
  if (a.rows < win || a.cols < win) {
    fail(Errc::kImageTooSmall, "ssim: image smaller than the " + std::to_string(win) + "x" +
                                   std::to_string(win) + " window");
  }
  const auto k = gaussian_kernel(radius, kSigma);
  const Map2 x = to_map(a), y = to_map(b);
  const Map2 ux = filter_valid(x, k), uy = filter_valid(y, k);
  const Map2 uxx = filter_valid(product(x, x), k), uyy = filter_valid(product(y, y), k);
  const Map2 uxy = filter_valid(product(x, y), k);
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0.0;
  for (std::size_t n = 0; n < ux.v.size(); ++n) {
    const double mx = ux.v[n], my = uy.v[n];
    const double vx = uxx.v[n] - mx * mx, vy = uyy.v[n] - my * my, vxy = uxy.v[n] - mx * my;
    total += ((2 * mx * my + c1) * (2 * vxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(ux.v.size());
}

double vifp(const Image2D& reference, const Image2D& distorted, double sigma_nsq) {
  check_shape(reference, distorted, "vifp");
  constexpr double kEps = 1e-10;
  Map2 gt = to_map(reference), p = to_map(distorted);
  double num = 0.0, den = 0.0;
  for (int scale = 1; scale <= 4; ++scale) {
    const int n = (1 << (4 - scale + 1)) + 1;
    const int half = n / 2;
    const auto k = gaussian_kernel(half, n / 5.0);
    auto fits = [&](const Map2& m) { return m.rows >= n && m.cols >= n; };
    if (scale > 1) {
      if (!fits(gt)) fail(Errc::kImageTooSmall, "vifp: image too small for four scales");
      gt = downsample2(filter_valid(gt, k));
      p = downsample2(filter_valid(p, k));
    }
    if (!fits(gt)) fail(Errc::kImageTooSmall, "vifp: image too small for four scales");
    const Map2 mu1 = filter_valid(gt, k), mu2 = filter_valid(p, k);
    const Map2 s11 = filter_valid(product(gt, gt), k), s22 = filter_valid(product(p, p), k);
    const Map2 s12 = filter_valid(product(gt, p), k);
    for (std::size_t m = 0; m < mu1.v.size(); ++m) {
      double sg = s11.v[m] - mu1.v[m] * mu1.v[m];
      double sp = s22.v[m] - mu2.v[m] * mu2.v[m];
      const double sgp = s12.v[m] - mu1.v[m] * mu2.v[m];
      if (sg < 0) sg = 0;
      if (sp < 0) sp = 0;
      double g = sgp / (sg + kEps);
      double sv = sp - g * sgp;
      if (sg < kEps) {
        g = 0;
        sv = sp;
        sg = 0;
      }
      if (sp < kEps) {
        g = 0;
        sv = 0;
      }
      if (g < 0) {
        sv = sp;
        g = 0;
      }
      if (sv <= kEps) sv = kEps;
      num += std::log10(1.0 + g * g * sg / (sv + sigma_nsq));
      den += std::log10(1.0 + sg / sigma_nsq);
    }
  }
  return num / den;
}

const char* dice_subset_name(DiceSubset subset) {
  return subset == DiceSubset::kAll ? "all" : "posterior";
}

double dice_coefficient(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) fail(Errc::kShapeMismatch, "dice: mask sizes differ");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    na += a[n] != 0;
    nb += b[n] != 0;
    both += a[n] != 0 && b[n] != 0;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<DiceRow> dice_rows(const LabelVolume& reference, const LabelVolume& predicted,
                               const std::string& volume_id, const LabelVolume* reference_subregions,
                               const LabelVolume* predicted_subregions) {
  if (!reference.geometry().same_grid(predicted.geometry())) {
    fail(Errc::kGeometryMismatch, "dice: reference and prediction are on different grids");
  }
  const bool posterior = reference_subregions != nullptr && predicted_subregions != nullptr;
  if (posterior && (!reference_subregions->geometry().same_grid(reference.geometry()) ||
                    !predicted_subregions->geometry().same_grid(reference.geometry()))) {
    fail(Errc::kGeometryMismatch, "dice: subregion volumes are on a different grid");
  }
  struct Counts {
    std::size_t a = 0, b = 0, both = 0;
    std::size_t pa = 0, pb = 0, pboth = 0;
  };
  std::map<std::int32_t, Counts> counts;
  for (std::int32_t id : reference.labels()) counts[id];
  const auto& ra = reference.data();
  const auto& rb = predicted.data();
  for (std::size_t n = 0; n < ra.size(); ++n) {
    const std::int32_t la = ra[n], lb = rb[n];
    const bool pa = posterior && (*reference_subregions).data()[n] == kPosterior;
    const bool pb = posterior && (*predicted_subregions).data()[n] == kPosterior;
    if (la != 0) {
      Counts& c = counts[la];
      ++c.a;
      if (pa) ++c.pa;
      if (lb == la) {
        ++c.both;
        if (pa && pb) ++c.pboth;
      }
    }
    if (lb != 0) {
      auto it = counts.find(lb);
      if (it == counts.end()) continue;
      ++it->second.b;
      if (pb) ++it->second.pb;
    }
  }
  std::vector<DiceRow> rows;
  for (const auto& [id, c] : counts) {
    rows.push_back({volume_id, id, DiceSubset::kAll,
                    2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b)});
  }
  if (posterior) {
    for (const auto& [id, c] : counts) {
      if (c.pa + c.pb == 0) continue;
      rows.push_back({volume_id, id, DiceSubset::kPosterior,
                      2.0 * static_cast<double>(c.pboth) / static_cast<double>(c.pa + c.pb)});
    }
  }
  return rows;
}

double dice_per_volume(const std::vector<DiceRow>& rows, DiceSubset subset) {
  std::map<std::string, std::pair<double, std::size_t>> per;
  for (const auto& r : rows) {
    if (r.subset != subset) continue;
    per[r.volume_id].first += r.dice;
    ++per[r.volume_id].second;
  }
  if (per.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& [id, v] : per) s += v.first / static_cast<double>(v.second);
  return s / static_cast<double>(per.size());
}

double dice_per_vertebra(const std::vector<DiceRow>& rows, DiceSubset subset) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.subset != subset) continue;
    s += r.dice;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

LabelVolume match_labels(const LabelVolume& predicted, const LabelVolume& reference) {
  if (!reference.geometry().same_grid(predicted.geometry())) {
    fail(Errc::kGeometryMismatch, "match_labels: volumes are on different grids");
  }
  std::map<std::pair<std::int32_t, std::int32_t>, std::size_t> overlap;
  for (std::size_t n = 0; n < predicted.size(); ++n) {
    const std::int32_t p = predicted.data()[n], r = reference.data()[n];
    if (p != 0 && r != 0) ++overlap[{p, r}];
  }
  std::vector<std::pair<std::size_t, std::pair<std::int32_t, std::int32_t>>> order;
  for (const auto& [key, count] : overlap) order.push_back({count, key});
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::map<std::int32_t, std::int32_t> rename;
  std::set<std::int32_t> taken;
  for (const auto& [count, key] : order) {
    if (rename.count(key.first) || taken.count(key.second)) continue;
    rename[key.first] = key.second;
    taken.insert(key.second);
  }
  LabelVolume out(predicted.geometry(), predicted.kind());
  for (std::size_t n = 0; n < predicted.size(); ++n) {
    const std::int32_t p = predicted.data()[n];
    if (p == 0) continue;
    auto it = rename.find(p);
    out.data()[n] = it == rename.end() ? 0 : it->second;
  }
  return out;
}

}  // namespace mr2ct
