#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "vaut/tensor.hpp"

// Differentiable tensor operations. Binary elementwise ops broadcast with
// trailing-axis alignment: extents are compared from the last axis backwards
// and an extent of 1 (or a missing leading axis) stretches to match.

namespace vaut {

Shape broadcast_shapes(const Shape& a, const Shape& b);

template <FloatElement T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <FloatElement T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <FloatElement T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <FloatElement T> Tensor<T> scale(const Tensor<T>& a, T factor);

template <FloatElement T> Tensor<T> relu(const Tensor<T>& x);

/// While alive, records the smallest |input| that relu sees on this thread.
/// Finite-difference checks use it to reject points next to the kink.
class ReluKinkMonitor {
 public:
  ReluKinkMonitor();
  ~ReluKinkMonitor();
  ReluKinkMonitor(const ReluKinkMonitor&) = delete;
  ReluKinkMonitor& operator=(const ReluKinkMonitor&) = delete;

  double min_abs_input() const;
};
template <FloatElement T> Tensor<T> sigmoid(const Tensor<T>& x);
/// tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
template <FloatElement T> Tensor<T> gelu(const Tensor<T>& x);
/// Numerically stable (max-subtracted) softmax along `axis`.
template <FloatElement T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Batched matrix product over the last two axes; leading axes broadcast.
template <FloatElement T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

struct Conv2dOptions {
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> padding{0, 0};
  std::size_t groups = 1;
};

/// input [n, c_in, h, w], weight [c_out, c_in/groups, kh, kw], no bias.
template <FloatElement T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Conv2dOptions& options = {});

/// Normalizes over the last axis, then applies gamma/beta of that extent.
template <FloatElement T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

/// x [n, c, ...]: normalizes each (sample, channel group) over its channels and
/// all trailing axes, then applies per-channel gamma/beta. No batch statistics.
template <FloatElement T>
Tensor<T> group_norm(const Tensor<T>& x, std::size_t groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps);

template <FloatElement T>
Tensor<T> sum(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdim = false);
template <FloatElement T>
Tensor<T> mean(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool keepdim = false);
/// Reduction over every element to a rank-0 tensor.
template <FloatElement T> Tensor<T> sum(const Tensor<T>& x);
template <FloatElement T> Tensor<T> mean(const Tensor<T>& x);

template <FloatElement T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Output axis i is input axis perm[i].
template <FloatElement T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);
template <FloatElement T> Tensor<T> transpose(const Tensor<T>& x, std::size_t axis_a, std::size_t axis_b);
template <FloatElement T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
/// Half-open range [start, end) along `axis`.
template <FloatElement T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t end);
template <FloatElement T> Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape);

}  // namespace vaut
