#pragma once

// Spherical range-view projection of LiDAR sweeps.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "rangefuse/common.h"
#include "rangefuse/errors.h"
#include "rangefuse/point_cloud.h"
#include "rangefuse/tensor_io.h"

namespace rangefuse {

/// Angular extent of the sensor, in degrees. `up` is above the horizon
/// (positive), `down` below it (non-positive); `left`/`right` bound the
/// azimuth around the forward axis.
struct FovConfig {
  double up_deg = 10.0;
  double down_deg = -30.0;
  double left_deg = -180.0;
  double right_deg = 180.0;

  double horizontal_span_deg() const { return std::abs(left_deg) + std::abs(right_deg); }
  double vertical_span_deg() const { return std::abs(up_deg) + std::abs(down_deg); }

  /// Throws ConfigurationError unless both spans are positive.
  void validate() const;

  static FovConfig nuscenes() { return {10.0, -30.0, -180.0, 180.0}; }
  static FovConfig semantic_kitti() { return {10.0, -30.0, -180.0, 180.0}; }
  static FovConfig waymo() { return {2.4, -17.6, -180.0, 180.0}; }
};

/// "nuscenes", "kitti" / "semantic_kitti" or "waymo".
FovConfig fov_preset(std::string_view name);

template <typename Scalar>
struct SphericalCoords {
  Scalar theta;  // azimuth, radians, (-pi, pi]
  Scalar phi;    // elevation, radians, [-pi/2, pi/2]
  Scalar range;  // meters
};

/// Azimuth, elevation and range of a point in the sensor frame.
template <typename Derived>
SphericalCoords<typename Derived::Scalar> spherical_angles(const Eigen::MatrixBase<Derived>& p) {
  EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(Derived, 3)
  using Scalar = typename Derived::Scalar;
  const Scalar r = p.norm();
  if (!(r > Scalar(0))) throw DegeneratePointError("zero-length point has no direction");
  Scalar theta = -std::atan2(p(1), p(0));
  // atan2 returns [-pi, pi]; negation maps +pi onto -pi, fold it back.
  if (theta <= -std::numbers::pi_v<Scalar>) theta += Scalar(2) * std::numbers::pi_v<Scalar>;
  const Scalar ratio = std::clamp(p(2) / r, Scalar(-1), Scalar(1));
  return {theta, std::asin(ratio), r};
}

/// Continuous (u, v) image coordinates of a direction; u is the column
/// axis and v the row axis. Not clamped to the grid.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project_to_pixel(Scalar theta, Scalar phi, const FovConfig& fov,
                                             int height, int width) {
  const Scalar left = deg2rad(Scalar(std::abs(fov.left_deg)));
  const Scalar down = deg2rad(Scalar(std::abs(fov.down_deg)));
  const Scalar fh = deg2rad(Scalar(fov.horizontal_span_deg()));
  const Scalar fv = deg2rad(Scalar(fov.vertical_span_deg()));
  return {(theta + left) / fh * Scalar(width), (Scalar(1) - (phi + down) / fv) * Scalar(height)};
}

/// Floors continuous coordinates and clamps onto the grid. Coordinates more
/// than half a pixel outside the grid are rejected as out of view.
std::optional<PixelCoord> discretize(const Eigen::Vector2d& uv, int height, int width);

/// Pixel of a 3D point, or nullopt for origin points and out-of-view points.
std::optional<PixelCoord> locate_pixel(const Eigen::Vector3d& p, const FovConfig& fov, int height,
                                       int width);

/// (theta, phi) at the center of a pixel.
Eigen::Vector2d pixel_center_angles(PixelCoord px, const FovConfig& fov, int height, int width);

/// Range-view raster. Invalid pixels hold range -1, z 0, intensity 0.
struct RangeImage {
  static constexpr double kInvalidRange = -1.0;

  int height = 0;
  int width = 0;
  Eigen::ArrayXXd range;      // height x width
  Eigen::ArrayXXd z;
  Eigen::ArrayXXd intensity;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid;

  RangeImage() = default;
  RangeImage(int h, int w);

  bool contains(PixelCoord px) const {
    return px.row >= 0 && px.row < height && px.col >= 0 && px.col < width;
  }
};

/// Point <-> pixel correspondence produced by rasterize().
class RvMapping {
 public:
  RvMapping() = default;

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t point_count() const { return forward_.size(); }

  /// Pixel of point j, or nullopt when it fell outside the field of view.
  const std::optional<PixelCoord>& forward(std::size_t j) const { return forward_[j]; }
  const std::vector<std::optional<PixelCoord>>& forward() const { return forward_; }

  /// Indices of every point that landed on `px`, ascending.
  std::span<const int> points_at(PixelCoord px) const;
  /// Index of the minimum-range point at `px`, -1 when unoccupied.
  int nearest(PixelCoord px) const;

  std::size_t out_of_fov_count() const;

 private:
  friend std::pair<RangeImage, RvMapping> rasterize(const PointCloud&, const FovConfig&, int, int);

  std::size_t flat(PixelCoord px) const { return std::size_t(px.row) * std::size_t(width_) + std::size_t(px.col); }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::optional<PixelCoord>> forward_;
  std::vector<std::size_t> offsets_;  // CSR over pixels, size H*W + 1
  std::vector<int> indices_;
  std::vector<int> nearest_;
};

/// Projects a sweep into an H x W range image, keeping the minimum-range point
/// per pixel (lowest index on exact ties).
std::pair<RangeImage, RvMapping> rasterize(const PointCloud& cloud, const FovConfig& fov,
                                           int height, int width);

/// Point indices stored at column u, row v. Throws std::out_of_range off-grid.
std::span<const int> pixels_to_points(const RvMapping& mapping, int u, int v);

/// (H, W, 4) float32: range, z, intensity, valid.
Tensor range_image_tensor(const RangeImage& image);
/// (N, 2) int32: row, col per point; -1, -1 when out of view.
Tensor forward_mapping_tensor(const RvMapping& mapping);
/// (H, W) int32 nearest point index, -1 when empty.
Tensor nearest_index_tensor(const RvMapping& mapping);

}  // namespace rangefuse
