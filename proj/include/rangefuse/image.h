#pragma once

#include <Eigen/Core>

#include <filesystem>

namespace rangefuse {

enum class PixelRange { kByte, kUnit };

/// H x W RGB image. Rows of `pixels` are pixels in row-major order. Byte
/// images hold integral values in [0, 255], unit images reals in [0, 1].
struct Image {
  using Pixels = Eigen::Array<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

  int height = 0;
  int width = 0;
  PixelRange range = PixelRange::kByte;
  Pixels pixels;

  Image() = default;
  Image(int h, int w, PixelRange r = PixelRange::kByte)
      : height(h), width(w), range(r), pixels(Pixels::Zero(Eigen::Index(h) * w, 3)) {}

  double max_value() const { return range == PixelRange::kByte ? 255.0 : 1.0; }
  Eigen::Index index(int row, int col) const { return Eigen::Index(row) * width + col; }
  Eigen::Index pixel_count() const { return pixels.rows(); }

  double& at(int row, int col, int ch) { return pixels(index(row, col), ch); }
  double at(int row, int col, int ch) const { return pixels(index(row, col), ch); }

  /// Clamps into range; byte images are also rounded to integers.
  void finalize();

  Image to_unit() const;
  /// Rounds to the nearest integer level.
  Image to_byte() const;

  friend bool operator==(const Image& a, const Image& b) {
    return a.height == b.height && a.width == b.width && a.range == b.range &&
           (a.pixels == b.pixels).all();
  }
};

/// Binary PPM (P6, maxval 255). Reads as a byte image.
Image read_ppm(const std::filesystem::path& path);
/// Unit images are quantized on write.
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Rec. 601 luma per pixel.
Eigen::ArrayXd luminance(const Image& image);

}  // namespace rangefuse
