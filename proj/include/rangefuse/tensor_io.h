#pragma once

// "RFT1" tensor container.
//
// Layout (all integers little-endian):
//   bytes 0..3   magic "RFT1"
//   uint32       dtype code (see DType)
//   uint32       rank
//   uint64[rank] dims, outermost first
//   payload      row-major elements, little-endian
//
// Hosts are required to be little-endian.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rangefuse/errors.h"

namespace rangefuse {

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

enum class DType : std::uint32_t {
  kFloat32 = 1,
  kFloat64 = 2,
  kInt32 = 3,
  kUInt32 = 4,
  kUInt8 = 5,
};

std::size_t dtype_size(DType dtype);

template <typename T>
constexpr DType dtype_of();
template <> constexpr DType dtype_of<float>() { return DType::kFloat32; }
template <> constexpr DType dtype_of<double>() { return DType::kFloat64; }
template <> constexpr DType dtype_of<std::int32_t>() { return DType::kInt32; }
template <> constexpr DType dtype_of<std::uint32_t>() { return DType::kUInt32; }
template <> constexpr DType dtype_of<std::uint8_t>() { return DType::kUInt8; }

class Tensor {
 public:
  Tensor() = default;

  template <typename T>
  static Tensor from(std::vector<std::uint64_t> dims, std::span<const T> values) {
    Tensor t;
    t.dtype_ = dtype_of<T>();
    t.dims_ = std::move(dims);
    if (t.element_count() != values.size()) {
      throw ShapeError("tensor dims do not match element count");
    }
    t.payload_.resize(values.size() * sizeof(T));
    if (!values.empty()) std::memcpy(t.payload_.data(), values.data(), t.payload_.size());
    return t;
  }

  DType dtype() const { return dtype_; }
  const std::vector<std::uint64_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t element_count() const;
  const std::vector<std::byte>& payload() const { return payload_; }

  /// Copies the payload out as T, converting from the stored dtype.
  template <typename T>
  std::vector<T> values() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  friend Tensor read_tensor(std::span<const std::byte> bytes);

  DType dtype_ = DType::kFloat32;
  std::vector<std::uint64_t> dims_;
  std::vector<std::byte> payload_;
};

std::vector<std::byte> encode_tensor(const Tensor& tensor);
Tensor read_tensor(std::span<const std::byte> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

namespace detail {
template <typename Src, typename Dst>
void convert_payload(const std::vector<std::byte>& payload, std::vector<Dst>& out) {
  const std::size_t n = payload.size() / sizeof(Src);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Src v;
    std::memcpy(&v, payload.data() + i * sizeof(Src), sizeof(Src));
    out[i] = static_cast<Dst>(v);
  }
}
}  // namespace detail

template <typename T>
std::vector<T> Tensor::values() const {
  std::vector<T> out;
  switch (dtype_) {
    case DType::kFloat32: detail::convert_payload<float>(payload_, out); break;
    case DType::kFloat64: detail::convert_payload<double>(payload_, out); break;
    case DType::kInt32: detail::convert_payload<std::int32_t>(payload_, out); break;
    case DType::kUInt32: detail::convert_payload<std::uint32_t>(payload_, out); break;
    case DType::kUInt8: detail::convert_payload<std::uint8_t>(payload_, out); break;
  }
  return out;
}

}  // namespace rangefuse
