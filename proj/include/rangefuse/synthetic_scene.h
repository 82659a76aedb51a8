#pragma once

// Ray-cast synthetic frames: ground plane with a road strip, colored boxes,
// a 360-degree LiDAR and a four-camera rig.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

#include "rangefuse/geometry_rv.h"
#include "rangefuse/image.h"
#include "rangefuse/labels.h"
#include "rangefuse/point_cloud.h"
#include "rangefuse/view_transform.h"
#include "rangefuse/waymo_labels.h"

namespace rangefuse::synthetic {

inline constexpr int kRoad = 1;
inline constexpr int kTerrain = 2;
inline constexpr int kCar = 3;
inline constexpr int kTruck = 4;

inline constexpr double kGroundZ = -1.7;
inline constexpr double kRoadHalfWidth = 4.0;

struct SceneConfig {
  std::uint64_t seed = 1;
  int cars = 2;
  int trucks = 2;
  double min_distance = 6.0;
  double max_distance = 16.0;
  double min_separation = 12.0;  // between object centers
  FovConfig fov = FovConfig::nuscenes();
  int lidar_height = 64;
  int lidar_width = 1024;
  double max_range = 40.0;
  int camera_height = 96;
  int camera_width = 128;
  double focal = 64.0;
  double camera_offset = 0.2;  // meters along each optical axis
  std::vector<CameraModel> cameras;  // empty: camera_rig()
};

/// Road, terrain, car and truck with the void class 0.
ClassSplit scene_class_split(int min_points = 15);

/// Four outward cameras at yaw 0, 90, 180 and 270 degrees.
std::vector<CameraModel> camera_rig(const SceneConfig& config);

struct Hit {
  double t = 0.0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  int object = -1;  // box index, -1 for the ground
};

/// Nearest surface along origin + t * dir with t > 0.
std::optional<Hit> cast_ray(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                            const std::vector<Box3D>& boxes, double max_t);

struct Scene {
  SceneConfig config;
  std::vector<Box3D> boxes;  // track id = index + 1
  PointCloud cloud;
  PanopticLabels labels;  // ground truth before any min-point filter
  std::vector<CameraModel> cameras;
  std::vector<Image> images;
};

/// Objects are placed uniformly in the distance ring with rejection on the
/// separation; throws ConfigurationError when placement fails.
Scene generate_scene(const SceneConfig& config);

/// Semantic class of a surface point.
int surface_class(const Hit& hit, const std::vector<Box3D>& boxes);
Eigen::Vector3d surface_color(const Hit& hit, const std::vector<Box3D>& boxes);

}  // namespace rangefuse::synthetic
