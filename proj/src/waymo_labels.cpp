#include "rangefuse/waymo_labels.h"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "rangefuse/errors.h"
#include "rangefuse/parallel.h"

namespace rangefuse {

void Box3D::validate() const {
  if (!(size.array() > 0.0).all() || !size.allFinite() || !center.allFinite()) {
    throw ValidationError("box sizes must be positive and finite");
  }
  if (!(yaw > -std::numbers::pi && yaw <= std::numbers::pi)) throw ValidationError("box yaw outside (-pi, pi]");
  if (track_id < 1 || track_id > 0xFFFF) throw ValidationError("track id must lie in [1, 65535]");
}

std::vector<bool> points_in_box(const PointCloud& cloud, const Box3D& box) {
  std::vector<bool> inside(std::size_t(cloud.size()));
  for (Eigen::Index j = 0; j < cloud.size(); ++j) inside[std::size_t(j)] = point_in_box(cloud.xyz(j), box);
  return inside;
}

std::vector<Box3D> read_boxes_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open box file " + path.string());
  std::vector<Box3D> boxes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      Box3D b;
      const auto c = doc.at("center").get<std::vector<double>>();
      const auto s = doc.at("size").get<std::vector<double>>();
      if (c.size() != 3 || s.size() != 3) throw ValidationError("center and size need 3 entries");
      b.center = Eigen::Vector3d(c[0], c[1], c[2]);
      b.size = Eigen::Vector3d(s[0], s[1], s[2]);
      b.yaw = doc.at("yaw").get<double>();
      b.class_id = doc.at("class_id").get<int>();
      b.track_id = doc.at("track_id").get<int>();
      b.validate();
      boxes.push_back(b);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return boxes;
}

void write_boxes_jsonl(const std::filesystem::path& path, std::span<const Box3D> boxes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write box file " + path.string());
  for (const auto& b : boxes) {
    const nlohmann::json doc{{"center", {b.center.x(), b.center.y(), b.center.z()}},
                             {"size", {b.size.x(), b.size.y(), b.size.z()}},
                             {"yaw", b.yaw},
                             {"class_id", b.class_id},
                             {"track_id", b.track_id}};
    out << doc.dump() << '\n';
  }
}

bool ClassMap::matches(int box_class, int semantic_class) const {
  if (unused.count(semantic_class)) return false;
  const auto it = compatible.find(box_class);
  return it != compatible.end() && it->second.count(semantic_class) > 0;
}

ClassMap ClassMap::waymo_default() {
  ClassMap m;
  m.compatible[1] = {1, 2, 3, 4};
  m.compatible[2] = {7};
  m.compatible[4] = {5, 6};
  m.unused = {5};
  return m;
}

ClassMap read_class_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open class map " + path.string());
  ClassMap m;
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& [key, ids] : doc.at("compatible").items()) {
      m.compatible[std::stoi(key)] = ids.get<std::set<int>>();
    }
    if (doc.contains("unused")) m.unused = doc.at("unused").get<std::set<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError("malformed class map " + path.string() + ": " + e.what());
  }
  return m;
}

void write_class_map(const std::filesystem::path& path, const ClassMap& map) {
  nlohmann::json compatible = nlohmann::json::object();
  for (const auto& [box_class, ids] : map.compatible) compatible[std::to_string(box_class)] = ids;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write class map " + path.string());
  out << nlohmann::json{{"compatible", compatible}, {"unused", map.unused}}.dump(2) << '\n';
}

PanopticLabels generate_panoptic(const PointCloud& cloud, std::span<const std::uint16_t> semantics,
                                 std::span<const Box3D> boxes, const ClassMap& class_map, int min_points) {
  if (Eigen::Index(semantics.size()) != cloud.size()) throw ShapeError("semantics length differs from point count");
  if (min_points < 0) throw ParameterError("min_points must be >= 0");
  std::set<int> tracks;
  for (const auto& b : boxes) {
    b.validate();
    if (!tracks.insert(b.track_id).second) {
      throw ValidationError("duplicate track id " + std::to_string(b.track_id));
    }
  }

  const auto n = std::size_t(cloud.size());
  std::vector<int> owner(n, -1);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const Eigen::Vector3d p = cloud.xyz(Eigen::Index(j));
      int best = -1;
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        const Box3D& box = boxes[b];
        if (!class_map.matches(box.class_id, semantics[j]) || !point_in_box(p, box)) continue;
        if (best < 0) {
          best = int(b);
          continue;
        }
        const Box3D& cur = boxes[std::size_t(best)];
        const double dv = box.volume() - cur.volume();
        if (dv < 0.0 || (dv == 0.0 && (p - box.center).squaredNorm() < (p - cur.center).squaredNorm())) {
          best = int(b);
        }
      }
      owner[j] = best;
    }
  });

  std::vector<long> counts(boxes.size(), 0);
  for (int o : owner) {
    if (o >= 0) ++counts[std::size_t(o)];
  }
  PanopticLabels labels(n);
  for (std::size_t j = 0; j < n; ++j) {
    const int o = owner[j];
    const bool keep = o >= 0 && counts[std::size_t(o)] >= min_points;
    labels[j] = pack_label(semantics[j], keep ? std::uint16_t(boxes[std::size_t(o)].track_id) : 0);
  }
  return labels;
}

}  // namespace rangefuse
