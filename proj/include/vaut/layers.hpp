#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vaut/ops.hpp"
#include "vaut/random.hpp"

namespace vaut {

template <FloatElement T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <FloatElement T>
using ParameterList = std::vector<NamedParameter<T>>;

/// Fan-in Kaiming-uniform bound sqrt(6 / fan_in), suited to ReLU layers.
template <FloatElement T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return uniform_tensor<T>(std::move(shape), -bound, bound, rng).set_requires_grad(true);
}

template <FloatElement T>
Tensor<T> xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_tensor<T>(std::move(shape), -bound, bound, rng).set_requires_grad(true);
}

template <FloatElement T>
Tensor<T> trainable(Shape shape, T fill) {
  return Tensor<T>(std::move(shape), fill).set_requires_grad(true);
}

/// y = x · weight + bias over the last axis; weight is [in, out].
template <FloatElement T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  static Linear xavier(std::size_t in, std::size_t out, Rng& rng) {
    return {xavier_uniform<T>({in, out}, in, out, rng), trainable<T>({out}, T(0))};
  }
  static Linear kaiming(std::size_t in, std::size_t out, Rng& rng) {
    return {kaiming_uniform<T>({in, out}, in, rng), trainable<T>({out}, T(0))};
  }

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor<T> forward(const Tensor<T>& x) const { return add(matmul(x, weight), bias); }

  void collect(const std::string& prefix, ParameterList<T>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <FloatElement T>
struct LayerNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  T eps = T(1e-5);

  static LayerNormParams create(std::size_t dim) { return {trainable<T>({dim}, T(1)), trainable<T>({dim}, T(0))}; }

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }

  void collect(const std::string& prefix, ParameterList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

}  // namespace vaut
