#pragma once

#include <Eigen/Core>

#include <filesystem>

namespace rangefuse {

/// N LiDAR returns, one row per point: x, y, z (meters), intensity.
struct PointCloud {
  Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor> points;

  PointCloud() = default;
  explicit PointCloud(Eigen::Index n) : points(n, 4) { points.setZero(); }

  Eigen::Index size() const { return points.rows(); }
  bool empty() const { return points.rows() == 0; }

  Eigen::Vector3d xyz(Eigen::Index j) const { return points.row(j).head<3>().transpose(); }
  double intensity(Eigen::Index j) const { return points(j, 3); }
};

/// Throws ValidationError if any coordinate or intensity is non-finite.
void validate(const PointCloud& cloud);

/// Headerless little-endian float32 records (x, y, z, intensity).
PointCloud read_point_cloud_bin(const std::filesystem::path& path);
void write_point_cloud_bin(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace rangefuse
