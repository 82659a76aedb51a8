#include "rangefuse/fusion.h"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <string>

#include "rangefuse/errors.h"
#include "rangefuse/parallel.h"
#include "rangefuse/tensor_io.h"

namespace rangefuse {

DeformableParams init_deformable(int channels) {
  if (channels <= 0) throw ShapeError("fusion channel count must be positive");
  DeformableParams p;
  p.offset_weight = RowMatrixXd::Zero(channels, 2 * kSamplingPoints);
  p.offset_bias << 1, 0, 0, 1, -1, 0, 0, -1;
  p.attention_weight = RowMatrixXd::Zero(channels, kSamplingPoints);
  p.attention_bias.setZero();
  p.value_weight = RowMatrixXd::Identity(channels, channels);
  return p;
}

void check_shapes(const DeformableParams& p, int channels) {
  if (p.offset_weight.rows() != channels || p.offset_weight.cols() != 2 * kSamplingPoints ||
      p.attention_weight.rows() != channels || p.attention_weight.cols() != kSamplingPoints ||
      p.value_weight.rows() != channels || p.value_weight.cols() != channels) {
    throw ShapeError("fusion parameters do not match " + std::to_string(channels) + " channels");
  }
}

FeatureMap modulate(const FeatureMap& camera, const ScalarField& uncertainty) {
  require_grid(uncertainty, camera, "modulate");
  FeatureMap out = camera;
  out.data = (1.0 - uncertainty.values).matrix().asDiagonal() * camera.data;
  return out;
}

Eigen::RowVectorXd bilinear_sample(const FeatureMap& f, double u, double v, const PixelMask* coverage) {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(f.channels());
  if (!std::isfinite(u) || !std::isfinite(v)) return out;
  const double u0 = std::floor(u);
  const double v0 = std::floor(v);
  const double fu = u - u0;
  const double fv = v - v0;
  const double corners[4][3] = {
      {v0, u0, (1.0 - fu) * (1.0 - fv)},
      {v0, u0 + 1.0, fu * (1.0 - fv)},
      {v0 + 1.0, u0, (1.0 - fu) * fv},
      {v0 + 1.0, u0 + 1.0, fu * fv},
  };
  for (const auto& [row, col, w] : corners) {
    if (w == 0.0 || row < 0.0 || col < 0.0 || row >= f.height || col >= f.width) continue;
    const auto i = f.index(int(row), int(col));
    if (coverage && !(*coverage)(i)) continue;
    out += w * f.data.row(i);
  }
  return out;
}

Eigen::Matrix<double, 1, kSamplingPoints> attention_weights(const Eigen::Matrix<double, 1, kSamplingPoints>& logits) {
  const Eigen::Matrix<double, 1, kSamplingPoints> e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Eigen::Matrix<double, kSamplingPoints, 2> sampling_offsets(const DeformableParams& p, const Eigen::RowVectorXd& query) {
  const Eigen::Matrix<double, 1, 2 * kSamplingPoints> flat = query * p.offset_weight + p.offset_bias;
  Eigen::Matrix<double, kSamplingPoints, 2> out;
  for (int k = 0; k < kSamplingPoints; ++k) out.row(k) << flat(2 * k), flat(2 * k + 1);
  return out;
}

FeatureMap deformable_attend(const FeatureMap& lidar, const FeatureMap& camera, const DeformableParams& p,
                             const PixelMask* coverage) {
  require_same_shape(lidar, camera, "deformable_attend");
  check_shapes(p, int(lidar.channels()));
  if (coverage && coverage->size() != camera.pixel_count()) throw ShapeError("coverage mask size mismatch");

  FeatureMap out(lidar.height, lidar.width, int(lidar.channels()), lidar.stride);
  parallel_for(std::size_t(lidar.pixel_count()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      const int row = int(q) / lidar.width;
      const int col = int(q) % lidar.width;
      const Eigen::RowVectorXd query = lidar.data.row(Eigen::Index(q));
      const auto offsets = sampling_offsets(p, query);
      const auto weights = attention_weights(query * p.attention_weight + p.attention_bias);
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(camera.channels());
      for (int k = 0; k < kSamplingPoints; ++k) {
        acc += weights(k) * bilinear_sample(camera, col + offsets(k, 0), row + offsets(k, 1), coverage);
      }
      out.data.row(Eigen::Index(q)) = acc * p.value_weight;
    }
  });
  return out;
}

FeatureMap fuse(const FeatureMap& lidar, const FeatureMap& attended) {
  require_same_shape(lidar, attended, "fuse");
  FeatureMap out = lidar;
  out.data += attended.data;
  return out;
}

FeatureMap fuse_scale(const FeatureMap& lidar, const FeatureMap& camera, const ScalarField& uncertainty,
                      const DeformableParams& params, const PixelMask* coverage) {
  return fuse(lidar, deformable_attend(lidar, modulate(camera, uncertainty), params, coverage));
}

const DeformableParams& FusionParams::at(int stride) const {
  const auto it = scales.find(stride);
  if (it == scales.end()) throw ShapeError("no fusion parameters for stride " + std::to_string(stride));
  return it->second;
}

namespace {

template <typename Derived>
Tensor dense_tensor(const Eigen::MatrixBase<Derived>& m) {
  const RowMatrixXd dense = m;
  return Tensor::from<double>({std::uint64_t(dense.rows()), std::uint64_t(dense.cols())},
                              std::span<const double>(dense.data(), std::size_t(dense.size())));
}

RowMatrixXd dense_matrix(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
  if (t.rank() != 2 || t.dims()[0] != std::uint64_t(rows) || t.dims()[1] != std::uint64_t(cols)) {
    throw ShapeError("fusion tensor has unexpected shape");
  }
  const auto v = t.values<double>();
  return Eigen::Map<const RowMatrixXd>(v.data(), rows, cols);
}

}  // namespace

void save_fusion_params(const std::filesystem::path& dir, const FusionParams& params) {
  std::filesystem::create_directories(dir);
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& [stride, p] : params.scales) {
    check_shapes(p, p.channels());
    const std::string prefix = "s" + std::to_string(stride) + "_";
    nlohmann::json files;
    const std::pair<const char*, Tensor> tensors[] = {
        {"offset_weight", dense_tensor(p.offset_weight)},
        {"offset_bias", dense_tensor(p.offset_bias)},
        {"attention_weight", dense_tensor(p.attention_weight)},
        {"attention_bias", dense_tensor(p.attention_bias)},
        {"value_weight", dense_tensor(p.value_weight)},
    };
    for (const auto& [name, tensor] : tensors) {
      const std::string file = prefix + name + ".rft";
      write_tensor(dir / file, tensor);
      files[name] = file;
    }
    scales.push_back({{"stride", stride}, {"channels", p.channels()}, {"tensors", files}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write fusion manifest in " + dir.string());
  out << nlohmann::json{{"schema_version", 1},
                        {"kind", "deformable_fusion"},
                        {"levels", kAttentionLevels},
                        {"points", kSamplingPoints},
                        {"scales", scales}}
             .dump(2)
      << '\n';
}

FusionParams load_fusion_params(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing fusion manifest in " + dir.string());
  FusionParams params;
  try {
    const auto manifest = nlohmann::json::parse(in);
    if (manifest.at("schema_version").get<int>() != 1) throw IoError("unsupported fusion schema_version");
    if (manifest.at("points").get<int>() != kSamplingPoints || manifest.at("levels").get<int>() != kAttentionLevels) {
      throw ConfigurationError("fusion checkpoint uses a different level/point layout");
    }
    for (const auto& s : manifest.at("scales")) {
      const int d = s.at("channels").get<int>();
      const auto& files = s.at("tensors");
      auto load = [&](const char* name, Eigen::Index rows, Eigen::Index cols) {
        return dense_matrix(read_tensor(dir / files.at(name).get<std::string>()), rows, cols);
      };
      DeformableParams p;
      p.offset_weight = load("offset_weight", d, 2 * kSamplingPoints);
      p.offset_bias = load("offset_bias", 1, 2 * kSamplingPoints);
      p.attention_weight = load("attention_weight", d, kSamplingPoints);
      p.attention_bias = load("attention_bias", 1, kSamplingPoints);
      p.value_weight = load("value_weight", d, d);
      params.scales[s.at("stride").get<int>()] = std::move(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed fusion manifest: " + std::string(e.what()));
  }
  return params;
}

}  // namespace rangefuse
