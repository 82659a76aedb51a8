#pragma once

// Camera pixel to range-view correspondence and camera feature warping.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rangefuse/common.h"
#include "rangefuse/feature_map.h"
#include "rangefuse/geometry_rv.h"
#include "rangefuse/point_cloud.h"

namespace rangefuse {

/// Pinhole camera. Pixel (row, col) corresponds to the homogeneous vector
/// [col, row, 1] with integer coordinates at pixel centers.
struct CameraModel {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d extrinsics = Eigen::Matrix4d::Identity();  // LiDAR -> camera
  int height = 0;
  int width = 0;

  Eigen::Matrix3d rotation() const { return extrinsics.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return extrinsics.topRightCorner<3, 1>(); }

  /// Throws ConfigurationError on a non-rigid extrinsic, non-positive focal
  /// lengths, a malformed intrinsic bottom row or an empty image.
  void validate() const;
};

inline constexpr double kRotationTolerance = 1e-6;

std::vector<CameraModel> read_calibration(const std::filesystem::path& path);
void write_calibration(const std::filesystem::path& path, std::span<const CameraModel> cameras);

/// Per-pixel depth in meters; `valid` marks pixels carrying a depth.
struct DepthMap {
  Eigen::ArrayXXd depth;  // rows x cols, 0 where invalid
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid;
  bool dense = false;

  DepthMap() = default;
  DepthMap(int rows, int cols)
      : depth(Eigen::ArrayXXd::Zero(rows, cols)),
        valid(Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows, cols, false)) {}

  int rows() const { return int(depth.rows()); }
  int cols() const { return int(depth.cols()); }
  std::size_t valid_count() const { return std::size_t(valid.count()); }
};

/// Camera-frame (col, row, depth) of a LiDAR-frame point before rounding.
Eigen::Vector3d camera_projection(const Eigen::Vector3d& p, const CameraModel& cam);

/// Z-buffered sparse depth. Points behind the camera or outside the image
/// are skipped.
DepthMap project_lidar_to_camera(const PointCloud& cloud, const CameraModel& cam);

DepthMap densify_depth(const DepthMap& sparse);

struct PixelOrigin {
  int camera = 0;
  int row = 0;
  int col = 0;
};

/// Back-projected pixels in the LiDAR frame plus the pixel each came from.
struct PseudoCloud {
  PointCloud cloud;
  std::vector<PixelOrigin> origins;
};

/// Back-projects every valid pixel. Throws ConfigurationError when the
/// intrinsics are singular.
PseudoCloud backproject(const DepthMap& depth, const CameraModel& cam, int camera_index = 0);

/// Dense (camera, row, col) -> RV pixel lookup at full resolution.
class CamToRvMap {
 public:
  CamToRvMap() = default;
  CamToRvMap(std::span<const CameraModel> cameras, int rv_height, int rv_width);

  int camera_count() const { return int(cells_.size()); }
  int rv_height() const { return rv_height_; }
  int rv_width() const { return rv_width_; }
  int camera_height(int m) const { return int(cells_[std::size_t(m)].rows()); }
  int camera_width(int m) const { return int(cells_[std::size_t(m)].cols()); }

  std::optional<PixelCoord> at(int m, int row, int col) const;
  void set(int m, int row, int col, PixelCoord rv);
  std::size_t mapped_count(int m) const;

 private:
  int rv_height_ = 0;
  int rv_width_ = 0;
  std::vector<Eigen::ArrayXXi> cells_;  // flat RV index or -1
};

/// Adds every pseudo-point of `pseudo` into `map`.
void add_to_cam_to_rv_map(CamToRvMap& map, const PseudoCloud& pseudo, const FovConfig& fov);

CamToRvMap build_cam_to_rv_map(const PseudoCloud& pseudo, std::span<const CameraModel> cameras,
                               const FovConfig& fov, int height, int width);

/// project -> densify -> backproject -> RV lookup for every camera.
CamToRvMap build_view_map(const PointCloud& cloud, std::span<const CameraModel> cameras,
                          const FovConfig& fov, int height, int width);

struct WarpedFeatures {
  FeatureMap features;
  PixelMask covered;
};

/// Averages camera feature vectors into RV cells at stride `stride`. Each
/// (camera, source cell, destination cell) link counts once. Camera feature
/// grids must be ceil(C/stride) on each axis; throws ShapeError otherwise.
WarpedFeatures warp_features(std::span<const FeatureMap> camera_features, const CamToRvMap& map,
                             int stride);

}  // namespace rangefuse
