#include <algorithm>
#include <cmath>
#include <limits>

#include "indexing.hpp"
#include "vaut/ops.hpp"

namespace vaut {

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

namespace {

// Shared machinery for broadcasting binary ops. `grad_a(x, y, g)` and
// `grad_b(x, y, g)` return the contribution of output grad g at one element.
template <FloatElement T, typename Fwd, typename GradA, typename GradB>
Tensor<T> binary_op(std::string_view name, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, GradA grad_a,
                    GradB grad_b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  Tensor<T> out(out_shape);
  auto ov = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();

  const bool same = a.shape() == out_shape && b.shape() == out_shape;
  std::vector<std::size_t> oa, ob;
  if (same) {
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  } else {
    oa = a.shape() == out_shape ? std::vector<std::size_t>{} : detail::broadcast_offsets(a.shape(), out_shape);
    ob = b.shape() == out_shape ? std::vector<std::size_t>{} : detail::broadcast_offsets(b.shape(), out_shape);
    for (std::size_t i = 0; i < ov.size(); ++i) {
      const std::size_t ia = oa.empty() ? i : oa[i];
      const std::size_t ib = ob.empty() ? i : ob[i];
      ov[i] = fwd(av[ia], bv[ib]);
    }
  }

  record_op<T>(name, out, {a, b},
               [sa = a.storage(), sb = b.storage(), oa = std::move(oa), ob = std::move(ob), grad_a,
                grad_b](std::span<const T> g) {
                 const auto& x = sa->values;
                 const auto& y = sb->values;
                 if (sa->requires_grad) {
                   sa->ensure_grad();
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const std::size_t ia = oa.empty() ? i : oa[i];
                     const std::size_t ib = ob.empty() ? i : ob[i];
                     sa->grad[ia] += grad_a(x[ia], y[ib], g[i]);
                   }
                 }
                 if (sb->requires_grad) {
                   sb->ensure_grad();
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const std::size_t ia = oa.empty() ? i : oa[i];
                     const std::size_t ib = ob.empty() ? i : ob[i];
                     sb->grad[ib] += grad_b(x[ia], y[ib], g[i]);
                   }
                 }
               });
  return out;
}

// Unary op whose derivative is expressed through input x and output y.
template <FloatElement T, typename Fwd, typename Deriv>
Tensor<T> unary_op(std::string_view name, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> out(x.shape());
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(xv[i]);
  record_op<T>(name, out, {x}, [sx = x.storage(), so = out.storage().get(), deriv](std::span<const T> g) {
    if (!sx->requires_grad) return;
    sx->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) sx->grad[i] += g[i] * deriv(sx->values[i], so->values[i]);
  });
  return out;
}

template <FloatElement T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <FloatElement T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return g; });
}

template <FloatElement T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return -g; });
}

template <FloatElement T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; },
      [](T x, T, T g) { return g * x; });
}

template <FloatElement T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary_op<T>(
      "scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

namespace {
thread_local int relu_monitors = 0;
thread_local double relu_min_abs = 0.0;
}  // namespace

ReluKinkMonitor::ReluKinkMonitor() {
  if (relu_monitors++ == 0) relu_min_abs = std::numeric_limits<double>::infinity();
}
ReluKinkMonitor::~ReluKinkMonitor() { --relu_monitors; }
double ReluKinkMonitor::min_abs_input() const { return relu_min_abs; }

template <FloatElement T>
Tensor<T> relu(const Tensor<T>& x) {
  if (relu_monitors > 0) {
    for (T v : x.values()) relu_min_abs = std::min(relu_min_abs, std::abs(static_cast<double>(v)));
  }
  return unary_op<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <FloatElement T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary_op<T>(
      "sigmoid", x, [](T v) { return stable_sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

namespace {
constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;
}  // namespace

template <FloatElement T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T c = T(kGeluScale);
  const T k = T(kGeluCubic);
  return unary_op<T>(
      "gelu", x, [=](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + k * v * v * v))); },
      [=](T v, T) {
        const T th = std::tanh(c * (v + k * v * v * v));
        return T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * c * (T(1) + T(3) * k * v * v);
      });
}

template <FloatElement T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  }
  const auto split = detail::split_at(x.shape(), axis);
  Tensor<T> out(x.shape());
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t in = 0; in < split.inner; ++in) {
      const std::size_t base = o * split.extent * split.inner + in;
      T peak = xv[base];
      for (std::size_t j = 1; j < split.extent; ++j) peak = std::max(peak, xv[base + j * split.inner]);
      T total = T(0);
      for (std::size_t j = 0; j < split.extent; ++j) {
        const T e = std::exp(xv[base + j * split.inner] - peak);
        ov[base + j * split.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < split.extent; ++j) ov[base + j * split.inner] /= total;
    }
  }
  record_op<T>("softmax", out, {x}, [sx = x.storage(), so = out.storage().get(), split](std::span<const T> g) {
    if (!sx->requires_grad) return;
    sx->ensure_grad();
    const auto& y = so->values;
    for (std::size_t o = 0; o < split.outer; ++o) {
      for (std::size_t in = 0; in < split.inner; ++in) {
        const std::size_t base = o * split.extent * split.inner + in;
        T dot = T(0);
        for (std::size_t j = 0; j < split.extent; ++j) {
          const std::size_t i = base + j * split.inner;
          dot += g[i] * y[i];
        }
        for (std::size_t j = 0; j < split.extent; ++j) {
          const std::size_t i = base + j * split.inner;
          sx->grad[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
  return out;
}

#define VAUT_INSTANTIATE(T)                                               \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                       \
  template Tensor<T> relu<T>(const Tensor<T>&);                           \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                        \
  template Tensor<T> gelu<T>(const Tensor<T>&);                           \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);

VAUT_INSTANTIATE(float)
VAUT_INSTANTIATE(double)
#undef VAUT_INSTANTIATE

}  // namespace vaut
