#pragma once

// Panoptic ground truth from per-point semantics and oriented boxes.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rangefuse/labels.h"
#include "rangefuse/point_cloud.h"

namespace rangefuse {

/// Oriented box, yaw about +z. The track id becomes the instance id.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();  // length (x'), width (y'), height (z')
  double yaw = 0.0;
  int class_id = 0;
  int track_id = 0;

  double volume() const { return size.prod(); }
  /// Throws ValidationError on non-positive sizes, yaw outside (-pi, pi] or
  /// a track id outside [1, 65535].
  void validate() const;
};

/// Closed-box containment test in the box frame.
template <typename Derived>
bool point_in_box(const Eigen::MatrixBase<Derived>& p, const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const Eigen::Vector3d d = p.template head<3>().template cast<double>() - box.center;
  const double x = c * d.x() + s * d.y();
  const double y = -s * d.x() + c * d.y();
  return std::abs(x) <= 0.5 * box.size.x() && std::abs(y) <= 0.5 * box.size.y() &&
         std::abs(d.z()) <= 0.5 * box.size.z();
}

std::vector<bool> points_in_box(const PointCloud& cloud, const Box3D& box);

/// One JSON object per line with keys center [3], size [3], yaw, class_id,
/// track_id. Blank lines are skipped.
std::vector<Box3D> read_boxes_jsonl(const std::filesystem::path& path);
void write_boxes_jsonl(const std::filesystem::path& path, std::span<const Box3D> boxes);

/// Box class -> compatible semantic classes. Semantic classes in `unused`
/// never receive instances.
struct ClassMap {
  std::map<int, std::set<int>> compatible;
  std::set<int> unused;

  bool matches(int box_class, int semantic_class) const;

  /// Box types vehicle 1, pedestrian 2, cyclist 4; semantic classes car 1,
  /// truck 2, bus 3, other vehicle 4, motorcyclist 5 (unused), bicyclist 6,
  /// pedestrian 7.
  static ClassMap waymo_default();
};

/// JSON: {"compatible": {"<box class>": [semantic ids]}, "unused": [ids]}.
ClassMap read_class_map(const std::filesystem::path& path);
void write_class_map(const std::filesystem::path& path, const ClassMap& map);

/// Labels each point with its semantic class and, when it lies inside a
/// compatible box, that box's track id. A point inside several compatible
/// boxes goes to the smallest volume, then the nearest center, then the
/// lowest box index. Instances with fewer than `min_points` points lose their
/// id. Throws ValidationError on duplicate track ids or invalid boxes and
/// ShapeError when the semantics length differs from the cloud.
PanopticLabels generate_panoptic(const PointCloud& cloud, std::span<const std::uint16_t> semantics,
                                 std::span<const Box3D> boxes, const ClassMap& class_map, int min_points);

}  // namespace rangefuse
