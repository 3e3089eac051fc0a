#include "mr2ct/distance.hpp"

#include <algorithm>
#include <limits>

namespace mr2ct {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas along one line. `f` holds input values at
// positions i*step; result written back into `f`.
void edt_line(std::vector<double>& f, int n, double step, std::vector<int>& v,
              std::vector<double>& z, std::vector<double>& d) {
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double xq = q * step;
    while (k >= 0) {
      const double xv = v[k] * step;
      const double s = ((f[q] + xq * xq) - (f[v[k]] + xv * xv)) / (2.0 * (xq - xv));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    const double xv = xq;
    if (k == 0) {
      z[k] = -kInf;
    } else {
      const double xp = v[k - 1] * step;
      z[k] = ((f[q] + xv * xv) - (f[v[k - 1]] + xp * xp)) / (2.0 * (xv - xp));
    }
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) d[q] = kInf;
  } else {
    int j = 0;
    for (int q = 0; q < n; ++q) {
      const double x = q * step;
      while (z[j + 1] < x) ++j;
      const double dx = x - v[j] * step;
      d[q] = dx * dx + f[v[j]];
    }
  }
  for (int q = 0; q < n; ++q) f[q] = d[q];
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& feature,
                                               const Index3& dims, const Vec3& spacing) {
  const std::size_t total = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (feature.size() != total) fail(Errc::kDimMismatch, "distance transform: mask size mismatch");
  std::vector<double> dist(total);
  for (std::size_t n = 0; n < total; ++n) dist[n] = feature[n] ? 0.0 : kInf;

  const int max_n = std::max({dims[0], dims[1], dims[2]});
  std::vector<double> line(max_n), out(max_n), z(max_n + 1);
  std::vector<int> v(max_n);
  const std::size_t stride[3] = {1, static_cast<std::size_t>(dims[0]),
                                 static_cast<std::size_t>(dims[0]) * dims[1]};
  for (int axis = 0; axis < 3; ++axis) {
    const int n = dims[axis];
    if (n == 1) continue;
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (int u = 0; u < dims[a1]; ++u) {
      for (int w = 0; w < dims[a2]; ++w) {
        const std::size_t base = u * stride[a1] + w * stride[a2];
        for (int q = 0; q < n; ++q) line[q] = dist[base + q * stride[axis]];
        edt_line(line, n, spacing[axis], v, z, out);
        for (int q = 0; q < n; ++q) dist[base + q * stride[axis]] = line[q];
      }
    }
  }
  return dist;
}

std::vector<double> squared_distance_to_labels(const Label2D& labels) {
  std::vector<std::uint8_t> feature(labels.size());
  for (std::size_t n = 0; n < labels.size(); ++n) feature[n] = labels.data[n] != 0;
  // Row-major (rows, cols) maps onto axis order (cols fastest, rows, 1).
  return squared_distance_transform(feature, {labels.cols, labels.rows, 1}, Vec3::Ones());
}

}  // namespace mr2ct
