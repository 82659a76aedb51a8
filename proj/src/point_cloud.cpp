#include "rangefuse/point_cloud.h"

#include <fstream>
#include <iterator>
#include <vector>

#include "rangefuse/errors.h"

namespace rangefuse {

void validate(const PointCloud& cloud) {
  if (!cloud.points.allFinite()) {
    throw ValidationError("point cloud contains non-finite values");
  }
}

PointCloud read_point_cloud_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t kRecord = 4 * sizeof(float);
  if (raw.size() % kRecord != 0) {
    throw IoError(path.string() + ": size is not a multiple of 16 bytes");
  }
  const auto n = static_cast<Eigen::Index>(raw.size() / kRecord);
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, 4, Eigen::RowMajor>> records(
      reinterpret_cast<const float*>(raw.data()), n, 4);
  PointCloud cloud;
  cloud.points = records.cast<double>();
  validate(cloud);
  return cloud;
}

void write_point_cloud_bin(const std::filesystem::path& path, const PointCloud& cloud) {
  const Eigen::Matrix<float, Eigen::Dynamic, 4, Eigen::RowMajor> records =
      cloud.points.cast<float>();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(records.data()),
            static_cast<std::streamsize>(records.size() * sizeof(float)));
}

}  // namespace rangefuse
