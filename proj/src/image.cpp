#include "rangefuse/image.h"

#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "rangefuse/errors.h"

namespace rangefuse {

void Image::finalize() {
  pixels = pixels.cwiseMax(0.0).cwiseMin(max_value());
  if (range == PixelRange::kByte) pixels = pixels.round();
}

Image Image::to_unit() const {
  if (range == PixelRange::kUnit) return *this;
  Image out(height, width, PixelRange::kUnit);
  out.pixels = pixels / 255.0;
  return out;
}

Image Image::to_byte() const {
  if (range == PixelRange::kByte) return *this;
  Image out(height, width, PixelRange::kByte);
  out.pixels = pixels * 255.0;
  out.finalize();
  return out;
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  while (true) {
    const int c = in.get();
    if (c == EOF) break;
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(char(c));
  }
  return token;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  if (next_token(in) != "P6") throw IoError(path.string() + ": not a binary PPM (P6)");
  int width = 0;
  int height = 0;
  int maxval = 0;
  try {
    width = std::stoi(next_token(in));
    height = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PPM header");
  }
  if (width <= 0 || height <= 0 || maxval != 255) {
    throw IoError(path.string() + ": unsupported PPM dimensions or maxval");
  }
  std::vector<unsigned char> bytes(std::size_t(width) * std::size_t(height) * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (in.gcount() != std::streamsize(bytes.size())) throw IoError(path.string() + ": truncated PPM payload");

  Image img(height, width, PixelRange::kByte);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels(Eigen::Index(i / 3), Eigen::Index(i % 3)) = bytes[i];
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  const Image byte = image.to_byte();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P6\n" << byte.width << ' ' << byte.height << "\n255\n";
  std::vector<unsigned char> bytes(std::size_t(byte.pixel_count()) * 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(byte.pixels(Eigen::Index(i / 3), Eigen::Index(i % 3)));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

Eigen::ArrayXd luminance(const Image& image) {
  return 0.299 * image.pixels.col(0) + 0.587 * image.pixels.col(1) + 0.114 * image.pixels.col(2);
}

}  // namespace rangefuse
