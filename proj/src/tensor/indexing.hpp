#pragma once

#include <cstddef>
#include <vector>

#include "vaut/tensor.hpp"

namespace vaut::detail {

/// For every flat index of `out`, the flat offset into a row-major tensor of
/// shape `in` broadcast against it (trailing alignment, size-1 stretching).
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out);

/// For every flat index of the permuted tensor, the flat offset in the source.
std::vector<std::size_t> permute_offsets(const Shape& in, const std::vector<std::size_t>& perm);

/// Splits `shape` around `axis` into (product before, extent, product after).
struct AxisSplit {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};
AxisSplit split_at(const Shape& shape, std::size_t axis);

}  // namespace vaut::detail
