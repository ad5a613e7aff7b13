#pragma once

#include <filesystem>
#include <iosfwd>

#include "vaut/tensor.hpp"

// Flat tensor record: "VAUT", u16 version, u8 dtype tag, u8 rank, rank × u64
// extents, then the values; every multi-byte field little-endian.

namespace vaut {

inline constexpr std::uint16_t kTensorFormatVersion = 1;

template <FloatElement T>
void write_tensor(std::ostream& os, const Tensor<T>& tensor);

/// Reads one record, converting from the stored dtype to T when they differ.
template <FloatElement T>
Tensor<T> read_tensor(std::istream& is);

/// dtype tag of the next record without consuming it.
DType peek_dtype(std::istream& is);

template <FloatElement T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& tensor);

template <FloatElement T>
Tensor<T> load_tensor(const std::filesystem::path& path);

}  // namespace vaut
