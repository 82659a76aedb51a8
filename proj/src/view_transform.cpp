#include "rangefuse/view_transform.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>

#include "rangefuse/depth_completion.h"
#include "rangefuse/errors.h"

namespace rangefuse {

void CameraModel::validate() const {
  if (height <= 0 || width <= 0) throw ConfigurationError("camera image size must be positive");
  if (!intrinsics.allFinite() || !extrinsics.allFinite()) {
    throw ConfigurationError("camera matrices must be finite");
  }
  const Eigen::Matrix3d r = rotation();
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kRotationTolerance) {
    throw ConfigurationError("extrinsic rotation is not orthonormal");
  }
  if (std::abs(r.determinant() - 1.0) > kRotationTolerance) {
    throw ConfigurationError("extrinsic rotation must have determinant +1");
  }
  if ((extrinsics.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > kRotationTolerance) {
    throw ConfigurationError("extrinsic bottom row must be [0 0 0 1]");
  }
  if (!(intrinsics(0, 0) > 0.0) || !(intrinsics(1, 1) > 0.0)) {
    throw ConfigurationError("focal lengths must be positive");
  }
  if (intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0) {
    throw ConfigurationError("intrinsic bottom row must be [0 0 k]");
  }
}

namespace {

template <int N>
Eigen::Matrix<double, N, N> matrix_from_json(const nlohmann::json& j, const char* key) {
  const auto& arr = j.at(key);
  if (!arr.is_array() || arr.size() != std::size_t(N * N)) {
    throw ConfigurationError(std::string("calibration field '") + key + "' must hold " +
                             std::to_string(N * N) + " numbers");
  }
  Eigen::Matrix<double, N, N> m;
  for (int r = 0; r < N; ++r) {
    for (int c = 0; c < N; ++c) m(r, c) = arr[std::size_t(r * N + c)].get<double>();
  }
  return m;
}

template <typename Derived>
nlohmann::json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  }
  return arr;
}

}  // namespace

std::vector<CameraModel> read_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError("malformed calibration JSON: " + std::string(e.what()));
  }
  const nlohmann::json& list = doc.is_object() ? doc.at("cameras") : doc;
  if (!list.is_array() || list.empty()) throw ConfigurationError("calibration lists no cameras");

  std::vector<CameraModel> cameras;
  try {
    for (const auto& entry : list) {
      CameraModel cam;
      cam.intrinsics = matrix_from_json<3>(entry, "intrinsics");
      cam.extrinsics = matrix_from_json<4>(entry, "extrinsics");
      const auto& size = entry.at("size");
      if (!size.is_array() || size.size() != 2) throw ConfigurationError("'size' must be [C_H, C_W]");
      cam.height = size[0].get<int>();
      cam.width = size[1].get<int>();
      cam.validate();
      cameras.push_back(cam);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError("invalid calibration entry: " + std::string(e.what()));
  }
  return cameras;
}

void write_calibration(const std::filesystem::path& path, std::span<const CameraModel> cameras) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& cam : cameras) {
    list.push_back({{"intrinsics", matrix_to_json(cam.intrinsics)},
                    {"extrinsics", matrix_to_json(cam.extrinsics)},
                    {"size", {cam.height, cam.width}}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write calibration file " + path.string());
  out << nlohmann::json{{"cameras", list}}.dump(2) << '\n';
}

Eigen::Vector3d camera_projection(const Eigen::Vector3d& p, const CameraModel& cam) {
  const Eigen::Vector3d pc = (cam.extrinsics * p.homogeneous()).head<3>();
  const Eigen::Vector3d uvw = cam.intrinsics * pc;
  return {uvw.x() / uvw.z(), uvw.y() / uvw.z(), pc.z()};
}

DepthMap project_lidar_to_camera(const PointCloud& cloud, const CameraModel& cam) {
  cam.validate();
  DepthMap out(cam.height, cam.width);
  for (Eigen::Index j = 0; j < cloud.size(); ++j) {
    const Eigen::Vector3d proj = camera_projection(cloud.xyz(j), cam);
    const double depth = proj.z();
    if (!(depth > 0.0) || !std::isfinite(proj.x()) || !std::isfinite(proj.y())) continue;
    const double col = std::floor(proj.x() + 0.5);
    const double row = std::floor(proj.y() + 0.5);
    if (col < 0.0 || col >= cam.width || row < 0.0 || row >= cam.height) continue;
    const auto r = Eigen::Index(row);
    const auto c = Eigen::Index(col);
    if (!out.valid(r, c) || depth < out.depth(r, c)) {
      out.depth(r, c) = depth;
      out.valid(r, c) = true;
    }
  }
  return out;
}

DepthMap densify_depth(const DepthMap& sparse) {
  DepthMap out;
  out.depth = depth_completion::complete(sparse.valid.select(sparse.depth, 0.0));
  out.valid = out.depth > 0.0;
  out.dense = true;
  return out;
}

PseudoCloud backproject(const DepthMap& depth, const CameraModel& cam, int camera_index) {
  const double det = cam.intrinsics.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) {
    throw ConfigurationError("camera intrinsics are singular");
  }
  const Eigen::Matrix3d k_inv = cam.intrinsics.inverse();
  const Eigen::Matrix4d t_inv = cam.extrinsics.inverse();

  PseudoCloud out;
  out.cloud = PointCloud(Eigen::Index(depth.valid_count()));
  out.origins.reserve(depth.valid_count());
  Eigen::Index k = 0;
  for (int row = 0; row < depth.rows(); ++row) {
    for (int col = 0; col < depth.cols(); ++col) {
      if (!depth.valid(row, col)) continue;
      const Eigen::Vector3d pc = depth.depth(row, col) * (k_inv * Eigen::Vector3d(col, row, 1.0));
      out.cloud.points.row(k).head<3>() = (t_inv * pc.homogeneous()).head<3>().transpose();
      out.origins.push_back({camera_index, row, col});
      ++k;
    }
  }
  return out;
}

CamToRvMap::CamToRvMap(std::span<const CameraModel> cameras, int rv_height, int rv_width)
    : rv_height_(rv_height), rv_width_(rv_width) {
  cells_.reserve(cameras.size());
  for (const auto& cam : cameras) cells_.push_back(Eigen::ArrayXXi::Constant(cam.height, cam.width, -1));
}

std::optional<PixelCoord> CamToRvMap::at(int m, int row, int col) const {
  const int flat = cells_[std::size_t(m)](row, col);
  if (flat < 0) return std::nullopt;
  return PixelCoord{flat / rv_width_, flat % rv_width_};
}

void CamToRvMap::set(int m, int row, int col, PixelCoord rv) {
  cells_[std::size_t(m)](row, col) = rv.row * rv_width_ + rv.col;
}

std::size_t CamToRvMap::mapped_count(int m) const {
  return std::size_t((cells_[std::size_t(m)] >= 0).count());
}

void add_to_cam_to_rv_map(CamToRvMap& map, const PseudoCloud& pseudo, const FovConfig& fov) {
  for (std::size_t k = 0; k < pseudo.origins.size(); ++k) {
    const auto& o = pseudo.origins[k];
    if (const auto px = locate_pixel(pseudo.cloud.xyz(Eigen::Index(k)), fov, map.rv_height(), map.rv_width())) {
      map.set(o.camera, o.row, o.col, *px);
    }
  }
}

CamToRvMap build_cam_to_rv_map(const PseudoCloud& pseudo, std::span<const CameraModel> cameras,
                               const FovConfig& fov, int height, int width) {
  fov.validate();
  CamToRvMap map(cameras, height, width);
  add_to_cam_to_rv_map(map, pseudo, fov);
  return map;
}

CamToRvMap build_view_map(const PointCloud& cloud, std::span<const CameraModel> cameras,
                          const FovConfig& fov, int height, int width) {
  fov.validate();
  CamToRvMap map(cameras, height, width);
  for (std::size_t m = 0; m < cameras.size(); ++m) {
    const DepthMap dense = densify_depth(project_lidar_to_camera(cloud, cameras[m]));
    add_to_cam_to_rv_map(map, backproject(dense, cameras[m], int(m)), fov);
  }
  return map;
}

WarpedFeatures warp_features(std::span<const FeatureMap> camera_features, const CamToRvMap& map,
                             int stride) {
  if (stride <= 0) throw ShapeError("stride must be positive");
  if (int(camera_features.size()) != map.camera_count()) {
    throw ShapeError("camera feature count does not match the view map");
  }
  const int out_h = strided_extent(map.rv_height(), stride);
  const int out_w = strided_extent(map.rv_width(), stride);
  Eigen::Index channels = camera_features.empty() ? 0 : camera_features[0].channels();

  // (destination cell, camera, source cell), de-duplicated and sorted.
  std::vector<std::tuple<Eigen::Index, int, Eigen::Index>> links;
  for (int m = 0; m < map.camera_count(); ++m) {
    const FeatureMap& f = camera_features[std::size_t(m)];
    if (f.height != strided_extent(map.camera_height(m), stride) ||
        f.width != strided_extent(map.camera_width(m), stride) || f.channels() != channels) {
      throw ShapeError("camera " + std::to_string(m) + " features do not match stride " +
                       std::to_string(stride));
    }
    for (int row = 0; row < map.camera_height(m); ++row) {
      for (int col = 0; col < map.camera_width(m); ++col) {
        const auto rv = map.at(m, row, col);
        if (!rv) continue;
        const Eigen::Index dst = Eigen::Index(rv->row / stride) * out_w + rv->col / stride;
        links.emplace_back(dst, m, f.index(row / stride, col / stride));
      }
    }
  }
  std::sort(links.begin(), links.end());
  links.erase(std::unique(links.begin(), links.end()), links.end());

  WarpedFeatures out{FeatureMap(out_h, out_w, int(channels), stride),
                     PixelMask::Constant(Eigen::Index(out_h) * out_w, false)};
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(Eigen::Index(out_h) * out_w);
  for (const auto& [dst, m, src] : links) {
    out.features.data.row(dst) += camera_features[std::size_t(m)].data.row(src);
    ++counts(dst);
  }
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (counts(i) == 0) continue;
    out.features.data.row(i) /= double(counts(i));
    out.covered(i) = true;
  }
  return out;
}

}  // namespace rangefuse
