#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <numbers>

namespace rangefuse {

template <typename Scalar>
using RowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXd = RowMatrix<double>;

/// Per-pixel boolean flags, flattened row-major (index = row * width + col).
using PixelMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Integer grid location. `row` is the image v axis, `col` the u axis.
struct PixelCoord {
  int row = 0;
  int col = 0;

  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

template <typename Scalar>
constexpr Scalar deg2rad(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}

template <typename Scalar>
constexpr Scalar rad2deg(Scalar rad) {
  return rad * Scalar(180) / std::numbers::pi_v<Scalar>;
}

/// Grid extent of a full-resolution dimension sampled at `stride`.
constexpr int strided_extent(int full, int stride) {
  return (full + stride - 1) / stride;
}

/// Dense per-pixel scalar grid (instability, uncertainty, ...).
struct ScalarField {
  int height = 0;
  int width = 0;
  Eigen::ArrayXd values;  // row-major, height * width

  ScalarField() = default;
  ScalarField(int h, int w, double fill = 0.0)
      : height(h), width(w), values(Eigen::ArrayXd::Constant(Eigen::Index(h) * w, fill)) {}

  double& operator()(int row, int col) { return values(Eigen::Index(row) * width + col); }
  double operator()(int row, int col) const { return values(Eigen::Index(row) * width + col); }
};

}  // namespace rangefuse
