#include "vaut/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace vaut {

namespace {

constexpr std::array<char, 4> kMagic{'V', 'A', 'U', 'T'};

template <typename U>
void put_le(std::ostream& os, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!is) throw ParseError("tensor record truncated");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

template <typename Float>
void read_values(std::istream& is, std::size_t count, auto&& sink) {
  using Bits = std::conditional_t<sizeof(Float) == 4, std::uint32_t, std::uint64_t>;
  for (std::size_t i = 0; i < count; ++i) sink(i, std::bit_cast<Float>(get_le<Bits>(is)));
}

}  // namespace

template <FloatElement T>
void write_tensor(std::ostream& os, const Tensor<T>& tensor) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  if (tensor.rank() > 255) throw DimensionError("tensor rank exceeds 255");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(os, kTensorFormatVersion);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype_of<T>()));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(tensor.rank()));
  for (std::size_t extent : tensor.shape()) put_le<std::uint64_t>(os, extent);
  for (T v : tensor.values()) put_le<Bits>(os, std::bit_cast<Bits>(v));
  if (!os) throw IoError("failed writing tensor record");
}

DType peek_dtype(std::istream& is) {
  const auto pos = is.tellg();
  std::array<char, 7> head{};
  is.read(head.data(), head.size());
  if (!is || std::memcmp(head.data(), kMagic.data(), kMagic.size()) != 0) throw ParseError("not a VAUT record");
  is.seekg(pos);
  return static_cast<DType>(static_cast<unsigned char>(head[6]));
}

template <FloatElement T>
Tensor<T> read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw ParseError("bad tensor magic (expected \"VAUT\")");
  const auto version = get_le<std::uint16_t>(is);
  if (version != kTensorFormatVersion) throw ParseError("unsupported tensor format version " + std::to_string(version));
  const auto tag = get_le<std::uint8_t>(is);
  const auto rank = get_le<std::uint8_t>(is);
  Shape shape(rank);
  for (auto& extent : shape) {
    extent = static_cast<std::size_t>(get_le<std::uint64_t>(is));
    if (extent == 0) throw ParseError("tensor record has a zero extent");
  }
  std::vector<T> values(shape_numel(shape));
  auto store = [&](std::size_t i, auto v) { values[i] = static_cast<T>(v); };
  if (tag == static_cast<std::uint8_t>(DType::kFloat32)) {
    read_values<float>(is, values.size(), store);
  } else if (tag == static_cast<std::uint8_t>(DType::kFloat64)) {
    read_values<double>(is, values.size(), store);
  } else {
    throw ParseError("unknown dtype tag " + std::to_string(tag));
  }
  return Tensor<T>(std::move(shape), std::move(values));
}

template <FloatElement T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& tensor) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(os, tensor);
}

template <FloatElement T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return read_tensor<T>(is);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);
template void save_tensor<float>(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor<double>(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor<float>(const std::filesystem::path&);
template Tensor<double> load_tensor<double>(const std::filesystem::path&);

}  // namespace vaut
