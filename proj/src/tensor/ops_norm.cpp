#include <cmath>

#include "vaut/ops.hpp"

namespace vaut {

namespace {

// Normalizes `rows` independent blocks of `len` contiguous values each,
// storing the normalized values and per-block inverse std.
template <typename T>
void normalize_blocks(const T* x, std::size_t rows, std::size_t len, T eps, T* xhat, T* inv_std) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * len;
    T mu = T(0);
    for (std::size_t i = 0; i < len; ++i) mu += xr[i];
    mu /= static_cast<T>(len);
    T var = T(0);
    for (std::size_t i = 0; i < len; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<T>(len);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t i = 0; i < len; ++i) xhat[r * len + i] = (xr[i] - mu) * inv;
  }
}

// dx = inv · (dxhat − mean(dxhat) − xhat · mean(dxhat ∘ xhat)) per block.
template <typename T>
void normalize_blocks_backward(const T* dxhat, const T* xhat, const T* inv_std, std::size_t rows,
                               std::size_t len, T* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* d = dxhat + r * len;
    const T* xh = xhat + r * len;
    T mean_d = T(0);
    T mean_dx = T(0);
    for (std::size_t i = 0; i < len; ++i) {
      mean_d += d[i];
      mean_dx += d[i] * xh[i];
    }
    mean_d /= static_cast<T>(len);
    mean_dx /= static_cast<T>(len);
    for (std::size_t i = 0; i < len; ++i) dx[r * len + i] += inv_std[r] * (d[i] - mean_d - xh[i] * mean_dx);
  }
}

template <typename T>
void check_eps(T eps, const char* op) {
  if (!(eps > T(0))) throw ConfigError(std::string(op) + ": eps must be positive");
}

}  // namespace

template <FloatElement T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  check_eps(eps, "layer_norm");
  if (x.rank() == 0) throw DimensionError("layer_norm on a rank-0 tensor");
  const std::size_t len = x.shape().back();
  if (gamma.shape() != Shape{len} || beta.shape() != Shape{len}) {
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                         " must be [" + std::to_string(len) + "] for input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / len;
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  normalize_blocks(x.values().data(), rows, len, eps, xhat.data(), inv_std.data());

  Tensor<T> out(x.shape());
  auto ov = out.mutable_values();
  auto gv = gamma.values();
  auto bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < len; ++i) ov[r * len + i] = xhat[r * len + i] * gv[i] + bv[i];
  }

  record_op<T>("layer_norm", out, {x, gamma, beta},
               [sx = x.storage(), sg = gamma.storage(), sb = beta.storage(), xhat = std::move(xhat),
                inv_std = std::move(inv_std), rows, len](std::span<const T> g) {
                 if (sg->requires_grad) {
                   sg->ensure_grad();
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t i = 0; i < len; ++i) sg->grad[i] += g[r * len + i] * xhat[r * len + i];
                 }
                 if (sb->requires_grad) {
                   sb->ensure_grad();
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t i = 0; i < len; ++i) sb->grad[i] += g[r * len + i];
                 }
                 if (sx->requires_grad) {
                   sx->ensure_grad();
                   std::vector<T> dxhat(g.size());
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t i = 0; i < len; ++i) dxhat[r * len + i] = g[r * len + i] * sg->values[i];
                   normalize_blocks_backward(dxhat.data(), xhat.data(), inv_std.data(), rows, len,
                                             sx->grad.data());
                 }
               });
  return out;
}

template <FloatElement T>
Tensor<T> group_norm(const Tensor<T>& x, std::size_t groups, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps) {
  check_eps(eps, "group_norm");
  if (x.rank() < 2) throw DimensionError("group_norm needs [n,c,...], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  if (groups == 0 || c % groups != 0) {
    throw ConfigError("group_norm: " + std::to_string(c) + " channels not divisible by " + std::to_string(groups) +
                      " groups");
  }
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw DimensionError("group_norm: gamma/beta must be [" + std::to_string(c) + "]");
  }
  const std::size_t spatial = x.numel() / (n * c);
  const std::size_t len = (c / groups) * spatial;
  const std::size_t rows = n * groups;
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  normalize_blocks(x.values().data(), rows, len, eps, xhat.data(), inv_std.data());

  Tensor<T> out(x.shape());
  auto ov = out.mutable_values();
  auto gv = gamma.values();
  auto bv = beta.values();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) ov[base + i] = xhat[base + i] * gv[ch] + bv[ch];
    }

  record_op<T>("group_norm", out, {x, gamma, beta},
               [sx = x.storage(), sg = gamma.storage(), sb = beta.storage(), xhat = std::move(xhat),
                inv_std = std::move(inv_std), n, c, spatial, rows, len](std::span<const T> g) {
                 if (sg->requires_grad) sg->ensure_grad();
                 if (sb->requires_grad) sb->ensure_grad();
                 for (std::size_t s = 0; s < n; ++s)
                   for (std::size_t ch = 0; ch < c; ++ch) {
                     const std::size_t base = (s * c + ch) * spatial;
                     T dg = T(0);
                     T db = T(0);
                     for (std::size_t i = 0; i < spatial; ++i) {
                       dg += g[base + i] * xhat[base + i];
                       db += g[base + i];
                     }
                     if (sg->requires_grad) sg->grad[ch] += dg;
                     if (sb->requires_grad) sb->grad[ch] += db;
                   }
                 if (sx->requires_grad) {
                   sx->ensure_grad();
                   std::vector<T> dxhat(g.size());
                   for (std::size_t s = 0; s < n; ++s)
                     for (std::size_t ch = 0; ch < c; ++ch) {
                       const std::size_t base = (s * c + ch) * spatial;
                       for (std::size_t i = 0; i < spatial; ++i) dxhat[base + i] = g[base + i] * sg->values[ch];
                     }
                   normalize_blocks_backward(dxhat.data(), xhat.data(), inv_std.data(), rows, len,
                                             sx->grad.data());
                 }
               });
  return out;
}

template Tensor<float> layer_norm<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> layer_norm<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                           double);
template Tensor<float> group_norm<float>(const Tensor<float>&, std::size_t, const Tensor<float>&,
                                         const Tensor<float>&, float);
template Tensor<double> group_norm<double>(const Tensor<double>&, std::size_t, const Tensor<double>&,
                                           const Tensor<double>&, double);

}  // namespace vaut
