#include <algorithm>
#include <numeric>

#include "indexing.hpp"
#include "vaut/ops.hpp"

namespace vaut {

namespace {

Shape reduced_shape(const Shape& in, const std::vector<std::size_t>& axes, bool keepdim) {
  std::vector<bool> reduce(in.size(), false);
  for (std::size_t axis : axes) {
    if (axis >= in.size()) {
      throw DimensionError("reduction axis " + std::to_string(axis) + " invalid for shape " + shape_str(in));
    }
    reduce[axis] = true;
  }
  Shape out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!reduce[i]) {
      out.push_back(in[i]);
    } else if (keepdim) {
      out.push_back(1);
    }
  }
  return out;
}

Shape keepdim_shape(const Shape& in, const std::vector<std::size_t>& axes) {
  return reduced_shape(in, axes, true);
}

// out[offsets[i]] += factor · x[i]; gradient broadcasts back.
template <FloatElement T>
Tensor<T> reduce_sum(std::string_view name, const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdim,
                     T factor) {
  const Shape kept = keepdim_shape(x.shape(), axes);
  std::vector<std::size_t> offsets = detail::broadcast_offsets(kept, x.shape());
  Tensor<T> out(reduced_shape(x.shape(), axes, keepdim));
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[offsets[i]] += xv[i];
  if (factor != T(1)) {
    for (auto& v : ov) v *= factor;
  }
  record_op<T>(name, out, {x}, [sx = x.storage(), offsets = std::move(offsets), factor](std::span<const T> g) {
    if (!sx->requires_grad) return;
    sx->ensure_grad();
    for (std::size_t i = 0; i < offsets.size(); ++i) sx->grad[i] += factor * g[offsets[i]];
  });
  return out;
}

std::vector<std::size_t> all_axes(std::size_t rank) {
  std::vector<std::size_t> axes(rank);
  std::iota(axes.begin(), axes.end(), 0);
  return axes;
}

}  // namespace

template <FloatElement T>
Tensor<T> sum(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdim) {
  return reduce_sum<T>("sum", x, axes, keepdim, T(1));
}

template <FloatElement T>
Tensor<T> mean(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdim) {
  std::size_t count = 1;
  for (std::size_t axis : axes) count *= x.dim(axis);
  return reduce_sum<T>("mean", x, axes, keepdim, T(1) / static_cast<T>(count));
}

template <FloatElement T>
Tensor<T> sum(const Tensor<T>& x) {
  return sum(x, all_axes(x.rank()), false);
}

template <FloatElement T>
Tensor<T> mean(const Tensor<T>& x) {
  return mean(x, all_axes(x.rank()), false);
}

template <FloatElement T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()));
  record_op<T>("reshape", out, {x}, [sx = x.storage()](std::span<const T> g) {
    if (!sx->requires_grad) return;
    sx->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) sx->grad[i] += g[i];
  });
  return out;
}

template <FloatElement T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  if (perm.size() != x.rank()) {
    throw DimensionError("permutation of length " + std::to_string(perm.size()) + " for shape " +
                         shape_str(x.shape()));
  }
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw DimensionError("invalid permutation for shape " + shape_str(x.shape()));
    seen[p] = true;
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = x.dim(perm[i]);
  std::vector<std::size_t> offsets = detail::permute_offsets(x.shape(), perm);
  Tensor<T> out(out_shape);
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[offsets[i]];
  record_op<T>("permute", out, {x}, [sx = x.storage(), offsets = std::move(offsets)](std::span<const T> g) {
    if (!sx->requires_grad) return;
    sx->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) sx->grad[offsets[i]] += g[i];
  });
  return out;
}

template <FloatElement T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t axis_a, std::size_t axis_b) {
  std::vector<std::size_t> perm = all_axes(x.rank());
  if (axis_a >= perm.size() || axis_b >= perm.size()) {
    throw DimensionError("transpose axes out of range for shape " + shape_str(x.shape()));
  }
  std::swap(perm[axis_a], perm[axis_b]);
  return permute(x, perm);
}

template <FloatElement T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat axis out of range for shape " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != first.size()) throw DimensionError("concat rank mismatch: " + shape_str(probe));
    for (std::size_t i = 0; i < probe.size(); ++i) {
      if (i != axis && probe[i] != first[i]) {
        throw DimensionError("concat shapes differ off-axis: " + shape_str(first) + " vs " + shape_str(probe));
      }
    }
    out_shape[axis] += probe[axis];
  }
  const auto split = detail::split_at(out_shape, axis);
  Tensor<T> out(out_shape);
  auto ov = out.mutable_values();
  std::vector<std::size_t> starts;
  std::size_t start = 0;
  for (const auto& p : parts) {
    starts.push_back(start);
    const std::size_t ext = p.dim(axis);
    auto pv = p.values();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(pv.begin() + o * ext * split.inner, ext * split.inner,
                  ov.begin() + (o * split.extent + start) * split.inner);
    }
    start += ext;
  }

  std::vector<typename Tape<T>::StoragePtr> storages;
  for (const auto& p : parts) storages.push_back(p.storage());
  record_op<T>("concat", out, parts,
               [storages = std::move(storages), starts = std::move(starts), split, axis](std::span<const T> g) {
                 for (std::size_t k = 0; k < storages.size(); ++k) {
                   auto& s = storages[k];
                   if (!s->requires_grad) continue;
                   s->ensure_grad();
                   const std::size_t ext = s->shape[axis];
                   for (std::size_t o = 0; o < split.outer; ++o) {
                     const T* src = g.data() + (o * split.extent + starts[k]) * split.inner;
                     T* dst = s->grad.data() + o * ext * split.inner;
                     for (std::size_t i = 0; i < ext * split.inner; ++i) dst[i] += src[i];
                   }
                 }
               });
  return out;
}

template <FloatElement T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t end) {
  if (axis >= x.rank() || start >= end || end > x.dim(axis)) {
    throw DimensionError("slice [" + std::to_string(start) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  }
  const auto split = detail::split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - start;
  const std::size_t ext = end - start;
  Tensor<T> out(out_shape);
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(xv.begin() + (o * split.extent + start) * split.inner, ext * split.inner,
                ov.begin() + o * ext * split.inner);
  }
  record_op<T>("slice", out, {x}, [sx = x.storage(), split, start, ext](std::span<const T> g) {
    if (!sx->requires_grad) return;
    sx->ensure_grad();
    for (std::size_t o = 0; o < split.outer; ++o) {
      T* dst = sx->grad.data() + (o * split.extent + start) * split.inner;
      const T* src = g.data() + o * ext * split.inner;
      for (std::size_t i = 0; i < ext * split.inner; ++i) dst[i] += src[i];
    }
  });
  return out;
}

template <FloatElement T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape) {
  if (broadcast_shapes(x.shape(), shape) != shape) {
    throw DimensionError("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<std::size_t> offsets = detail::broadcast_offsets(x.shape(), shape);
  Tensor<T> out(shape);
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[offsets[i]];
  record_op<T>("broadcast_to", out, {x}, [sx = x.storage(), offsets = std::move(offsets)](std::span<const T> g) {
    if (!sx->requires_grad) return;
    sx->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) sx->grad[offsets[i]] += g[i];
  });
  return out;
}

#define VAUT_INSTANTIATE(T)                                                                     \
  template Tensor<T> sum<T>(const Tensor<T>&, const std::vector<std::size_t>&, bool);           \
  template Tensor<T> mean<T>(const Tensor<T>&, const std::vector<std::size_t>&, bool);          \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                  \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                 \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                       \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<std::size_t>&);             \
  template Tensor<T> transpose<T>(const Tensor<T>&, std::size_t, std::size_t);                  \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                     \
  template Tensor<T> slice<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t);         \
  template Tensor<T> broadcast_to<T>(const Tensor<T>&, const Shape&);

VAUT_INSTANTIATE(float)
VAUT_INSTANTIATE(double)
#undef VAUT_INSTANTIATE

}  // namespace vaut
