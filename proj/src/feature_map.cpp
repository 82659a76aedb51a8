#include "rangefuse/feature_map.h"

#include <vector>

namespace rangefuse {

Tensor to_tensor(const FeatureMap& map) {
  const RowMatrix<float> values = map.data.cast<float>();
  return Tensor::from<float>({std::uint64_t(map.height), std::uint64_t(map.width),
                              std::uint64_t(map.channels())},
                             std::span<const float>(values.data(), std::size_t(values.size())));
}

FeatureMap feature_map_from_tensor(const Tensor& tensor, int stride) {
  if (tensor.rank() != 3) throw ShapeError("feature tensor must have rank 3 (H, W, D)");
  const auto& d = tensor.dims();
  FeatureMap map{int(d[0]), int(d[1]), int(d[2]), stride};
  const auto values = tensor.values<double>();
  map.data = Eigen::Map<const RowMatrixXd>(values.data(), map.data.rows(), map.data.cols());
  return map;
}

Tensor to_tensor(const ScalarField& field) {
  const Eigen::ArrayXf values = field.values.cast<float>();
  return Tensor::from<float>({std::uint64_t(field.height), std::uint64_t(field.width)},
                             std::span<const float>(values.data(), std::size_t(values.size())));
}

ScalarField scalar_field_from_tensor(const Tensor& tensor) {
  if (tensor.rank() != 2) throw ShapeError("scalar field tensor must have rank 2 (H, W)");
  ScalarField field(int(tensor.dims()[0]), int(tensor.dims()[1]));
  const auto values = tensor.values<double>();
  field.values = Eigen::Map<const Eigen::ArrayXd>(values.data(), Eigen::Index(values.size()));
  return field;
}

Tensor mask_to_tensor(const PixelMask& mask, int height, int width) {
  if (mask.size() != Eigen::Index(height) * width) throw ShapeError("mask size mismatch");
  std::vector<std::uint8_t> bytes(std::size_t(mask.size()));
  for (Eigen::Index i = 0; i < mask.size(); ++i) bytes[std::size_t(i)] = mask(i) ? 1 : 0;
  return Tensor::from<std::uint8_t>({std::uint64_t(height), std::uint64_t(width)}, bytes);
}

PixelMask mask_from_tensor(const Tensor& tensor) {
  const auto values = tensor.values<std::uint8_t>();
  PixelMask mask(Eigen::Index(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) mask(Eigen::Index(i)) = values[i] != 0;
  return mask;
}

}  // namespace rangefuse
