#pragma once

#include <Eigen/Core>

#include "rangefuse/common.h"
#include "rangefuse/errors.h"
#include "rangefuse/tensor_io.h"

namespace rangefuse {

/// Channel width the encoders emit at each output stride.
constexpr int default_channels(int stride) {
  switch (stride) {
    case 4: return 128;
    case 8: return 256;
    case 16: return 512;
    case 32: return 1024;
    default: return 0;
  }
}

/// H x W x D feature grid at a given encoder stride. Rows of `data` are
/// pixels in row-major order; columns are channels.
template <typename Scalar>
struct FeatureMapT {
  int height = 0;
  int width = 0;
  int stride = 1;
  RowMatrix<Scalar> data;

  FeatureMapT() = default;
  FeatureMapT(int h, int w, int channels, int s = 1)
      : height(h), width(w), stride(s), data(RowMatrix<Scalar>::Zero(Eigen::Index(h) * w, channels)) {}

  Eigen::Index channels() const { return data.cols(); }
  Eigen::Index pixel_count() const { return data.rows(); }
  Eigen::Index index(int row, int col) const { return Eigen::Index(row) * width + col; }

  auto pixel(int row, int col) { return data.row(index(row, col)); }
  auto pixel(int row, int col) const { return data.row(index(row, col)); }

  bool same_shape(const FeatureMapT& other) const {
    return height == other.height && width == other.width && channels() == other.channels();
  }
};

using FeatureMap = FeatureMapT<double>;

inline void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": feature map shapes differ");
}

inline void require_grid(const ScalarField& field, const FeatureMap& map, const char* what) {
  if (field.height != map.height || field.width != map.width) {
    throw ShapeError(std::string(what) + ": field grid does not match feature grid");
  }
}

/// (H, W, D) float32 tensor.
Tensor to_tensor(const FeatureMap& map);
FeatureMap feature_map_from_tensor(const Tensor& tensor, int stride);

/// (H, W) float32 tensor.
Tensor to_tensor(const ScalarField& field);
ScalarField scalar_field_from_tensor(const Tensor& tensor);

/// (H, W) uint8 tensor of 0/1.
Tensor mask_to_tensor(const PixelMask& mask, int height, int width);
PixelMask mask_from_tensor(const Tensor& tensor);

}  // namespace rangefuse
