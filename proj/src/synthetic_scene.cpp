#include "rangefuse/synthetic_scene.h"

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "rangefuse/errors.h"

namespace rangefuse::synthetic {
namespace {

const Eigen::Vector3d kSky(190, 190, 190);
const Eigen::Vector3d kRoadColor(105, 105, 110);
const Eigen::Vector3d kTerrainColor(70, 150, 60);
const Eigen::Vector3d kCarColor(210, 40, 40);
const Eigen::Vector3d kTruckColor(40, 60, 210);

// Slab test in the box frame; returns the entry distance.
std::optional<double> intersect_box(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const Eigen::Vector3d d0 = origin - box.center;
  const Eigen::Vector3d o(c * d0.x() + s * d0.y(), -s * d0.x() + c * d0.y(), d0.z());
  const Eigen::Vector3d v(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(), dir.z());
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double half = 0.5 * box.size(a);
    if (std::abs(v(a)) < 1e-12) {
      if (std::abs(o(a)) > half) return std::nullopt;
      continue;
    }
    double ta = (-half - o(a)) / v(a);
    double tb = (half - o(a)) / v(a);
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t1 <= 0.0) return std::nullopt;
  return t0 > 0.0 ? t0 : t1;
}

}  // namespace

ClassSplit scene_class_split(int min_points) {
  ClassSplit split;
  split.thing_ids = {kCar, kTruck};
  split.stuff_ids = {kRoad, kTerrain};
  split.void_id = 0;
  split.min_points = min_points;
  split.names = {{kRoad, "road"}, {kTerrain, "terrain"}, {kCar, "car"}, {kTruck, "truck"}};
  split.validate();
  return split;
}

std::vector<CameraModel> camera_rig(const SceneConfig& config) {
  std::vector<CameraModel> cams;
  for (int i = 0; i < 4; ++i) {
    const double yaw = i * std::numbers::pi / 2.0;
    const Eigen::Vector3d forward(std::cos(yaw), std::sin(yaw), 0.0);
    const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Eigen::Vector3d down(0.0, 0.0, -1.0);
    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    CameraModel cam;
    cam.height = config.camera_height;
    cam.width = config.camera_width;
    cam.intrinsics << config.focal, 0.0, 0.5 * (cam.width - 1), 0.0, config.focal, 0.5 * (cam.height - 1), 0.0, 0.0,
        1.0;
    cam.extrinsics.setIdentity();
    cam.extrinsics.topLeftCorner<3, 3>() = r;
    cam.extrinsics.topRightCorner<3, 1>() = -r * (config.camera_offset * forward);
    cams.push_back(cam);
  }
  return cams;
}

std::optional<Hit> cast_ray(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const std::vector<Box3D>& boxes,
                            double max_t) {
  std::optional<Hit> best;
  if (dir.z() < 0.0) {
    const double t = (kGroundZ - origin.z()) / dir.z();
    if (t > 0.0 && t <= max_t) best = Hit{t, origin + t * dir, -1};
  }
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const auto t = intersect_box(origin, dir, boxes[b]);
    if (t && *t <= max_t && (!best || *t < best->t)) best = Hit{*t, origin + *t * dir, int(b)};
  }
  return best;
}

int surface_class(const Hit& hit, const std::vector<Box3D>& boxes) {
  if (hit.object >= 0) return boxes[std::size_t(hit.object)].class_id;
  return std::abs(hit.point.y()) < kRoadHalfWidth ? kRoad : kTerrain;
}

Eigen::Vector3d surface_color(const Hit& hit, const std::vector<Box3D>& boxes) {
  Eigen::Vector3d base;
  switch (surface_class(hit, boxes)) {
    case kRoad: base = kRoadColor; break;
    case kTerrain: base = kTerrainColor; break;
    case kCar: base = kCarColor; break;
    default: base = kTruckColor; break;
  }
  // Half-meter checker texture.
  const long cell = long(std::floor(2.0 * hit.point.x())) + long(std::floor(2.0 * hit.point.y())) +
                    long(std::floor(2.0 * hit.point.z()));
  return base * ((cell & 1) ? 0.85 : 1.0);
}

Scene generate_scene(const SceneConfig& config) {
  config.fov.validate();
  Scene scene;
  scene.config = config;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> dist(config.min_distance, config.max_distance);

  const int total = config.cars + config.trucks;
  for (int i = 0; i < total; ++i) {
    const bool car = i < config.cars;
    Box3D box;
    box.class_id = car ? kCar : kTruck;
    box.track_id = i + 1;
    box.size = car ? Eigen::Vector3d(4.5, 1.9, 1.6) : Eigen::Vector3d(8.0, 2.5, 3.0);
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const double a = angle(rng);
      const double r = dist(rng);
      box.center = Eigen::Vector3d(r * std::cos(a), r * std::sin(a), kGroundZ + 0.5 * box.size.z());
      box.yaw = angle(rng);
      if (box.yaw <= -std::numbers::pi) box.yaw += 2.0 * std::numbers::pi;
      placed = true;
      for (const auto& other : scene.boxes) {
        if ((other.center - box.center).head<2>().norm() < config.min_separation) placed = false;
      }
    }
    if (!placed) throw ConfigurationError("cannot place the requested objects in the distance ring");
    scene.boxes.push_back(box);
  }

  std::vector<Eigen::Vector4d> points;
  for (int row = 0; row < config.lidar_height; ++row) {
    for (int col = 0; col < config.lidar_width; ++col) {
      const Eigen::Vector2d ang = pixel_center_angles({row, col}, config.fov, config.lidar_height, config.lidar_width);
      const Eigen::Vector3d dir(std::cos(ang(0)) * std::cos(ang(1)), -std::sin(ang(0)) * std::cos(ang(1)),
                                std::sin(ang(1)));
      const auto hit = cast_ray(Eigen::Vector3d::Zero(), dir, scene.boxes, config.max_range);
      if (!hit) continue;
      const int cls = surface_class(*hit, scene.boxes);
      const double intensity = cls == kRoad ? 0.3 : cls == kTerrain ? 0.5 : 0.8;
      points.emplace_back(hit->point.x(), hit->point.y(), hit->point.z(), intensity);
      const auto instance = hit->object >= 0 ? std::uint16_t(scene.boxes[std::size_t(hit->object)].track_id) : 0;
      scene.labels.push_back(pack_label(std::uint16_t(cls), instance));
    }
  }
  scene.cloud = PointCloud(Eigen::Index(points.size()));
  for (std::size_t j = 0; j < points.size(); ++j) scene.cloud.points.row(Eigen::Index(j)) = points[j].transpose();

  scene.cameras = config.cameras.empty() ? camera_rig(config) : config.cameras;
  for (const auto& cam : scene.cameras) cam.validate();
  for (const auto& cam : scene.cameras) {
    Image img(cam.height, cam.width);
    const Eigen::Matrix3d k_inv = cam.intrinsics.inverse();
    const Eigen::Matrix3d rt = cam.rotation().transpose();
    const Eigen::Vector3d origin = -rt * cam.translation();
    for (int row = 0; row < cam.height; ++row) {
      for (int col = 0; col < cam.width; ++col) {
        const Eigen::Vector3d dir = (rt * (k_inv * Eigen::Vector3d(col, row, 1.0))).normalized();
        const auto hit = cast_ray(origin, dir, scene.boxes, 3.0 * config.max_range);
        const Eigen::Vector3d color = hit ? surface_color(*hit, scene.boxes) : kSky;
        for (int ch = 0; ch < 3; ++ch) img.at(row, col, ch) = color(ch);
      }
    }
    img.finalize();
    scene.images.push_back(std::move(img));
  }
  return scene;
}

}  // namespace rangefuse::synthetic
