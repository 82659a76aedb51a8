#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library routine it checks.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "rangefuse/common.h"
#include "rangefuse/feature_map.h"
#include "rangefuse/fusion.h"
#include "rangefuse/geometry_rv.h"
#include "rangefuse/point_cloud.h"
#include "rangefuse/waymo_labels.h"

namespace oracle {

using rangefuse::PointCloud;

/// Points with ranges in [min_r, max_r] and directions spread over the full
/// sphere, so some fall outside a vertical field of view.
inline PointCloud random_cloud(std::mt19937_64& rng, int n, double min_r = 0.5, double max_r = 60.0) {
  std::uniform_real_distribution<double> az(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> el(-0.7, 0.3);
  std::uniform_real_distribution<double> rr(min_r, max_r);
  std::uniform_real_distribution<double> in(0.0, 1.0);
  PointCloud cloud(n);
  for (int j = 0; j < n; ++j) {
    const double a = az(rng);
    const double e = el(rng);
    const double r = rr(rng);
    cloud.points.row(j) << r * std::cos(e) * std::cos(a), r * std::cos(e) * std::sin(a), r * std::sin(e), in(rng);
  }
  return cloud;
}

/// Pixel from a from-scratch spherical projection: azimuth measured
/// clockwise from +x, elevation from the xy-plane.
struct Pixel {
  bool valid = false;
  int row = 0;
  int col = 0;
};

inline Pixel spherical_pixel(double x, double y, double z, const rangefuse::FovConfig& fov, int h, int w) {
  const double r = std::sqrt(x * x + y * y + z * z);
  if (r == 0.0) return {};
  double theta = std::atan2(-y, x);
  if (theta == -std::numbers::pi) theta = std::numbers::pi;
  const double phi = std::asin(std::clamp(z / r, -1.0, 1.0));
  const double to_rad = std::numbers::pi / 180.0;
  const double fh = (std::abs(fov.left_deg) + std::abs(fov.right_deg)) * to_rad;
  const double fv = (std::abs(fov.up_deg) + std::abs(fov.down_deg)) * to_rad;
  const double u = (theta + std::abs(fov.left_deg) * to_rad) / fh * w;
  const double v = (1.0 - (phi + std::abs(fov.down_deg) * to_rad) / fv) * h;
  if (u < -0.5 || u > w + 0.5 || v < -0.5 || v > h + 0.5) return {};
  return {true, std::clamp(int(std::floor(v)), 0, h - 1), std::clamp(int(std::floor(u)), 0, w - 1)};
}

/// Minimum-range point per pixel by exhaustive scan; -1 when empty.
inline std::vector<int> nearest_per_pixel(const PointCloud& cloud, const rangefuse::FovConfig& fov, int h, int w) {
  std::vector<int> best(std::size_t(h) * w, -1);
  std::vector<double> best_r(best.size(), std::numeric_limits<double>::infinity());
  for (Eigen::Index j = 0; j < cloud.size(); ++j) {
    const double x = cloud.points(j, 0), y = cloud.points(j, 1), z = cloud.points(j, 2);
    const Pixel px = spherical_pixel(x, y, z, fov, h, w);
    if (!px.valid) continue;
    const std::size_t k = std::size_t(px.row) * w + px.col;
    const double r = std::sqrt(x * x + y * y + z * z);
    if (r < best_r[k]) {
      best_r[k] = r;
      best[k] = int(j);
    }
  }
  return best;
}

/// Minimum total cost over every injective row -> column map.
inline double brute_force_assignment(const Eigen::MatrixXd& cost) {
  const int rows = int(cost.rows());
  const int cols = int(cost.cols());
  std::vector<int> perm(static_cast<std::size_t>(cols));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // Every permutation of the columns; the first `rows` entries form the map.
  do {
    double total = 0.0;
    for (int r = 0; r < rows; ++r) total += cost(r, perm[std::size_t(r)]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Single-channel bilinear sample written out corner by corner.
inline double sample_scalar(const std::vector<double>& grid, const std::vector<bool>& covered, int h, int w,
                            double u, double v) {
  const int c0 = int(std::floor(u));
  const int r0 = int(std::floor(v));
  const double fu = u - c0;
  const double fv = v - r0;
  double acc = 0.0;
  const int dr[4] = {0, 0, 1, 1};
  const int dc[4] = {0, 1, 0, 1};
  for (int k = 0; k < 4; ++k) {
    const int r = r0 + dr[k];
    const int c = c0 + dc[k];
    if (r < 0 || r >= h || c < 0 || c >= w) continue;
    if (!covered[std::size_t(r) * w + c]) continue;
    const double wt = (dr[k] ? fv : 1.0 - fv) * (dc[k] ? fu : 1.0 - fu);
    acc += wt * grid[std::size_t(r) * w + c];
  }
  return acc;
}

/// Deformable attention on a single-channel map, materializing every sample.
inline std::vector<double> deformable_single_channel(const std::vector<double>& lidar, const std::vector<double>& camera,
                                                     const std::vector<bool>& covered, int h, int w,
                                                     const rangefuse::DeformableParams& p) {
  constexpr int P = rangefuse::kSamplingPoints;
  std::vector<double> out(std::size_t(h) * w, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double q = lidar[std::size_t(r) * w + c];
      double logits[P];
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < P; ++k) {
        logits[k] = q * p.attention_weight(0, k) + p.attention_bias(k);
        mx = std::max(mx, logits[k]);
      }
      double z = 0.0;
      for (int k = 0; k < P; ++k) z += std::exp(logits[k] - mx);
      double acc = 0.0;
      for (int k = 0; k < P; ++k) {
        const double a = std::exp(logits[k] - mx) / z;
        const double du = q * p.offset_weight(0, 2 * k) + p.offset_bias(2 * k);
        const double dv = q * p.offset_weight(0, 2 * k + 1) + p.offset_bias(2 * k + 1);
        const double s = sample_scalar(camera, covered, h, w, c + du, r + dv);
        acc += a * s * p.value_weight(0, 0);
      }
      out[std::size_t(r) * w + c] = acc;
    }
  }
  return out;
}

/// Containment via the six face planes built from the box corners.
inline bool inside_by_half_spaces(const Eigen::Vector3d& p, const rangefuse::Box3D& box) {
  const Eigen::Vector3d ax(std::cos(box.yaw), std::sin(box.yaw), 0.0);
  const Eigen::Vector3d ay(-std::sin(box.yaw), std::cos(box.yaw), 0.0);
  const Eigen::Vector3d az(0.0, 0.0, 1.0);
  const Eigen::Vector3d axes[3] = {ax, ay, az};
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d plus = box.center + 0.5 * box.size(k) * axes[k];
    const Eigen::Vector3d minus = box.center - 0.5 * box.size(k) * axes[k];
    // Outward normals +axis at `plus`, -axis at `minus`.
    if ((p - plus).dot(axes[k]) > 0.0) return false;
    if ((p - minus).dot(-axes[k]) > 0.0) return false;
  }
  return true;
}

/// Pearson correlation of average ranks.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = double(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Random rotation from a normalized Gaussian quaternion.
inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
      2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
      2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return r;
}

}  // namespace oracle
