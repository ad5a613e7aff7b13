#include "indexing.hpp"

namespace vaut::detail {

std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t running = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    const std::size_t axis = rank - in.size() + i;
    stride[axis] = in[i] == 1 ? 0 : running;
    running *= in[i];
  }

  std::vector<std::size_t> offsets(shape_numel(out));
  std::vector<std::size_t> index(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < offsets.size(); ++flat) {
    offsets[flat] = offset;
    for (std::size_t axis = rank; axis-- > 0;) {
      offset += stride[axis];
      if (++index[axis] < out[axis]) break;
      offset -= stride[axis] * out[axis];
      index[axis] = 0;
    }
  }
  return offsets;
}

std::vector<std::size_t> permute_offsets(const Shape& in, const std::vector<std::size_t>& perm) {
  const std::size_t rank = in.size();
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];

  Shape out(rank);
  std::vector<std::size_t> stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out[i] = in[perm[i]];
    stride[i] = in_stride[perm[i]];
  }

  std::vector<std::size_t> offsets(shape_numel(in));
  std::vector<std::size_t> index(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < offsets.size(); ++flat) {
    offsets[flat] = offset;
    for (std::size_t axis = rank; axis-- > 0;) {
      offset += stride[axis];
      if (++index[axis] < out[axis]) break;
      offset -= stride[axis] * out[axis];
      index[axis] = 0;
    }
  }
  return offsets;
}

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace vaut::detail
