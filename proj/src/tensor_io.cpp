#include "rangefuse/tensor_io.h"

#include <array>
#include <fstream>
#include <iterator>

namespace rangefuse {
namespace {

constexpr std::array<char, 4> kMagic = {'R', 'F', 'T', '1'};

template <typename T>
void put(std::vector<std::byte>& out, T value) {
  const auto* p = reinterpret_cast<const std::byte*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(std::span<const std::byte> bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) throw IoError("truncated tensor header");
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return 4;
    case DType::kFloat64: return 8;
    case DType::kInt32: return 4;
    case DType::kUInt32: return 4;
    case DType::kUInt8: return 1;
  }
  throw IoError("unknown dtype code");
}

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims_) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<std::byte> encode_tensor(const Tensor& tensor) {
  std::vector<std::byte> out;
  out.reserve(12 + 8 * tensor.rank() + tensor.payload().size());
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dtype()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto d : tensor.dims()) put<std::uint64_t>(out, d);
  out.insert(out.end(), tensor.payload().begin(), tensor.payload().end());
  return out;
}

Tensor read_tensor(std::span<const std::byte> bytes) {
  if (bytes.size() < 12) throw IoError("tensor blob too short");
  for (std::size_t i = 0; i < kMagic.size(); ++i) {
    if (static_cast<char>(bytes[i]) != kMagic[i]) throw IoError("bad tensor magic");
  }
  std::size_t offset = 4;
  const auto code = take<std::uint32_t>(bytes, offset);
  if (code < 1 || code > 5) throw IoError("unknown dtype code " + std::to_string(code));
  const auto rank = take<std::uint32_t>(bytes, offset);

  Tensor t;
  t.dtype_ = static_cast<DType>(code);
  t.dims_.resize(rank);
  for (auto& d : t.dims_) d = take<std::uint64_t>(bytes, offset);

  const std::size_t expected = t.element_count() * dtype_size(t.dtype_);
  if (bytes.size() - offset != expected) {
    throw IoError("tensor payload size mismatch");
  }
  t.payload_.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return read_tensor(std::span<const std::byte>(reinterpret_cast<const std::byte*>(raw.data()), raw.size()));
}

}  // namespace rangefuse
