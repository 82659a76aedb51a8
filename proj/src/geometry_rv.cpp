#include "rangefuse/geometry_rv.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rangefuse {

void FovConfig::validate() const {
  if (!(vertical_span_deg() > 0.0) || !(horizontal_span_deg() > 0.0)) {
    throw ConfigurationError("field of view spans must be positive");
  }
  if (up_deg < 0.0 || down_deg > 0.0) {
    throw ConfigurationError("fov up must be >= 0 and fov down <= 0");
  }
}

FovConfig fov_preset(std::string_view name) {
  if (name == "nuscenes") return FovConfig::nuscenes();
  if (name == "kitti" || name == "semantic_kitti") return FovConfig::semantic_kitti();
  if (name == "waymo") return FovConfig::waymo();
  throw ConfigurationError("unknown fov preset '" + std::string(name) + "'");
}

std::optional<PixelCoord> discretize(const Eigen::Vector2d& uv, int height, int width) {
  const double u = uv.x();
  const double v = uv.y();
  if (!(u >= -0.5 && u <= width + 0.5 && v >= -0.5 && v <= height + 0.5)) return std::nullopt;
  const int col = std::clamp(static_cast<int>(std::floor(u)), 0, width - 1);
  const int row = std::clamp(static_cast<int>(std::floor(v)), 0, height - 1);
  return PixelCoord{row, col};
}

std::optional<PixelCoord> locate_pixel(const Eigen::Vector3d& p, const FovConfig& fov, int height,
                                       int width) {
  if (!(p.squaredNorm() > 0.0)) return std::nullopt;
  const auto s = spherical_angles(p);
  return discretize(project_to_pixel(s.theta, s.phi, fov, height, width), height, width);
}

Eigen::Vector2d pixel_center_angles(PixelCoord px, const FovConfig& fov, int height, int width) {
  const double fh = deg2rad(fov.horizontal_span_deg());
  const double fv = deg2rad(fov.vertical_span_deg());
  const double theta = (px.col + 0.5) / width * fh - deg2rad(std::abs(fov.left_deg));
  const double phi = (1.0 - (px.row + 0.5) / height) * fv - deg2rad(std::abs(fov.down_deg));
  return {theta, phi};
}

RangeImage::RangeImage(int h, int w)
    : height(h),
      width(w),
      range(Eigen::ArrayXXd::Constant(h, w, kInvalidRange)),
      z(Eigen::ArrayXXd::Zero(h, w)),
      intensity(Eigen::ArrayXXd::Zero(h, w)),
      valid(Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(h, w, false)) {}

std::span<const int> RvMapping::points_at(PixelCoord px) const {
  const auto i = flat(px);
  return {indices_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
}

int RvMapping::nearest(PixelCoord px) const { return nearest_[flat(px)]; }

std::size_t RvMapping::out_of_fov_count() const {
  return std::size_t(std::count(forward_.begin(), forward_.end(), std::nullopt));
}

std::pair<RangeImage, RvMapping> rasterize(const PointCloud& cloud, const FovConfig& fov,
                                           int height, int width) {
  fov.validate();
  if (height <= 0 || width <= 0) throw ConfigurationError("range image dims must be positive");
  validate(cloud);

  const auto n = static_cast<std::size_t>(cloud.size());
  RangeImage image(height, width);
  RvMapping mapping;
  mapping.height_ = height;
  mapping.width_ = width;
  mapping.forward_.resize(n);

  std::vector<double> ranges(n, 0.0);
  std::vector<int> order;
  order.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Eigen::Vector3d p = cloud.xyz(Eigen::Index(j));
    ranges[j] = p.norm();
    mapping.forward_[j] = locate_pixel(p, fov, height, width);
    if (mapping.forward_[j]) order.push_back(int(j));
  }

  // Far to near; among equal ranges the lowest index is written last.
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (ranges[a] != ranges[b]) return ranges[a] > ranges[b];
    return a > b;
  });

  const std::size_t pixels = std::size_t(height) * std::size_t(width);
  mapping.nearest_.assign(pixels, -1);
  for (int j : order) {
    const PixelCoord px = *mapping.forward_[j];
    image.range(px.row, px.col) = ranges[j];
    image.z(px.row, px.col) = cloud.points(j, 2);
    image.intensity(px.row, px.col) = cloud.points(j, 3);
    image.valid(px.row, px.col) = true;
    mapping.nearest_[mapping.flat(px)] = j;
  }

  mapping.offsets_.assign(pixels + 1, 0);
  for (const auto& px : mapping.forward_) {
    if (px) ++mapping.offsets_[mapping.flat(*px) + 1];
  }
  std::partial_sum(mapping.offsets_.begin(), mapping.offsets_.end(), mapping.offsets_.begin());
  mapping.indices_.resize(mapping.offsets_.back());
  std::vector<std::size_t> cursor(mapping.offsets_.begin(), mapping.offsets_.end() - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (const auto& px = mapping.forward_[j]) mapping.indices_[cursor[mapping.flat(*px)]++] = int(j);
  }
  return {std::move(image), std::move(mapping)};
}

std::span<const int> pixels_to_points(const RvMapping& mapping, int u, int v) {
  if (u < 0 || u >= mapping.width() || v < 0 || v >= mapping.height()) {
    throw std::out_of_range("pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") outside range image");
  }
  return mapping.points_at({v, u});
}

Tensor range_image_tensor(const RangeImage& image) {
  std::vector<float> values;
  values.reserve(std::size_t(image.height) * std::size_t(image.width) * 4);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      values.push_back(float(image.range(r, c)));
      values.push_back(float(image.z(r, c)));
      values.push_back(float(image.intensity(r, c)));
      values.push_back(image.valid(r, c) ? 1.0f : 0.0f);
    }
  }
  return Tensor::from<float>({std::uint64_t(image.height), std::uint64_t(image.width), 4}, values);
}

Tensor forward_mapping_tensor(const RvMapping& mapping) {
  std::vector<std::int32_t> values;
  values.reserve(mapping.point_count() * 2);
  for (const auto& px : mapping.forward()) {
    values.push_back(px ? px->row : -1);
    values.push_back(px ? px->col : -1);
  }
  return Tensor::from<std::int32_t>({std::uint64_t(mapping.point_count()), 2}, values);
}

Tensor nearest_index_tensor(const RvMapping& mapping) {
  std::vector<std::int32_t> values;
  values.reserve(std::size_t(mapping.height()) * std::size_t(mapping.width()));
  for (int r = 0; r < mapping.height(); ++r) {
    for (int c = 0; c < mapping.width(); ++c) values.push_back(mapping.nearest({r, c}));
  }
  return Tensor::from<std::int32_t>({std::uint64_t(mapping.height()), std::uint64_t(mapping.width())},
                                    values);
}

}  // namespace rangefuse
