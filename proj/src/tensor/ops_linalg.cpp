#include <algorithm>

#include "gemm.hpp"
#include "indexing.hpp"
#include "vaut/ops.hpp"

namespace vaut {

template <FloatElement T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape()[a.rank() - 1];
  const std::size_t n = b.shape()[b.rank() - 1];
  if (b.shape()[b.rank() - 2] != k) {
    throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  try {
    batch = broadcast_shapes(a_batch, b_batch);
  } catch (const DimensionError&) {
    throw DimensionError("matmul batch extents not broadcastable: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::vector<std::size_t> a_off = detail::broadcast_offsets(a_batch, batch);
  const std::vector<std::size_t> b_off = detail::broadcast_offsets(b_batch, batch);

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);
  const T* av = a.values().data();
  const T* bv = b.values().data();
  T* cv = out.mutable_values().data();
  for (std::size_t i = 0; i < a_off.size(); ++i) {
    detail::gemm_nn(m, n, k, av + a_off[i] * m * k, bv + b_off[i] * k * n, cv + i * m * n);
  }

  record_op<T>("matmul", out, {a, b},
               [sa = a.storage(), sb = b.storage(), a_off, b_off, m, n, k](std::span<const T> g) {
                 if (sa->requires_grad) {
                   sa->ensure_grad();
                   for (std::size_t i = 0; i < a_off.size(); ++i) {
                     detail::gemm_nt(m, k, n, g.data() + i * m * n, sb->values.data() + b_off[i] * k * n,
                                     sa->grad.data() + a_off[i] * m * k);
                   }
                 }
                 if (sb->requires_grad) {
                   sb->ensure_grad();
                   for (std::size_t i = 0; i < b_off.size(); ++i) {
                     detail::gemm_tn(k, n, m, sa->values.data() + a_off[i] * m * k, g.data() + i * m * n,
                                     sb->grad.data() + b_off[i] * k * n);
                   }
                 }
               });
  return out;
}

namespace {

struct ConvGeometry {
  std::size_t n, c_in, h, w;
  std::size_t c_out, kh, kw;
  std::size_t groups, cin_g, cout_g;
  std::size_t sh, sw, ph, pw;
  std::size_t oh, ow;

  std::size_t patch() const { return cin_g * kh * kw; }
  std::size_t positions() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && sh == 1 && sw == 1 && ph == 0 && pw == 0; }
};

// cols[(ci*kh + ky)*kw + kx][oy*ow + ox] for channels [c0, c0+cin_g) of one sample.
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* cols) {
  for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
    const T* plane = image + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((ci * g.kh + ky) * g.kw + kx) * g.positions();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.sh + ky) - static_cast<std::ptrdiff_t>(g.ph);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.sw + kx) - static_cast<std::ptrdiff_t>(g.pw);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.ow + ox] = inside ? plane[iy * g.w + ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* image) {
  for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
    T* plane = image + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((ci * g.kh + ky) * g.kw + kx) * g.positions();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.sh + ky) - static_cast<std::ptrdiff_t>(g.ph);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.sw + kx) - static_cast<std::ptrdiff_t>(g.pw);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            plane[iy * g.w + ix] += row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <FloatElement T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Conv2dOptions& options) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw DimensionError("conv2d expects input [n,c,h,w] and weight [c_out,c_in/g,kh,kw], got " +
                         shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  }
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c_in = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.c_out = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.groups = options.groups;
  g.sh = options.stride[0];
  g.sw = options.stride[1];
  g.ph = options.padding[0];
  g.pw = options.padding[1];
  if (g.groups == 0 || g.c_in % g.groups != 0 || g.c_out % g.groups != 0) {
    throw ConfigError("conv2d: channels in=" + std::to_string(g.c_in) + " out=" + std::to_string(g.c_out) +
                      " not divisible by groups=" + std::to_string(g.groups));
  }
  if (g.sh == 0 || g.sw == 0) throw ConfigError("conv2d: stride must be positive");
  g.cin_g = g.c_in / g.groups;
  g.cout_g = g.c_out / g.groups;
  if (weight.dim(1) != g.cin_g) {
    throw DimensionError("conv2d weight " + shape_str(weight.shape()) + " does not match input " +
                         shape_str(input.shape()) + " with groups=" + std::to_string(g.groups));
  }
  if (g.kh > g.h + 2 * g.ph || g.kw > g.w + 2 * g.pw) {
    throw DimensionError("conv2d kernel " + shape_str(weight.shape()) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  g.oh = (g.h + 2 * g.ph - g.kh) / g.sh + 1;
  g.ow = (g.w + 2 * g.pw - g.kw) / g.sw + 1;

  Tensor<T> out(Shape{g.n, g.c_out, g.oh, g.ow});
  const T* xv = input.values().data();
  const T* wv = weight.values().data();
  T* ov = out.mutable_values().data();
  std::vector<T> cols(g.pointwise() ? 0 : g.patch() * g.positions());
  for (std::size_t s = 0; s < g.n; ++s) {
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      const T* image = xv + (s * g.c_in + grp * g.cin_g) * g.h * g.w;
      const T* src = image;
      if (!g.pointwise()) {
        im2col(g, image, cols.data());
        src = cols.data();
      }
      detail::gemm_nn(g.cout_g, g.positions(), g.patch(), wv + grp * g.cout_g * g.patch(), src,
                      ov + (s * g.c_out + grp * g.cout_g) * g.positions());
    }
  }

  record_op<T>("conv2d", out, {input, weight}, [sx = input.storage(), sw = weight.storage(), g](std::span<const T> gy) {
    const bool need_x = sx->requires_grad;
    const bool need_w = sw->requires_grad;
    if (need_x) sx->ensure_grad();
    if (need_w) sw->ensure_grad();
    std::vector<T> cols(g.pointwise() ? 0 : g.patch() * g.positions());
    std::vector<T> dcols(need_x && !g.pointwise() ? g.patch() * g.positions() : 0);
    for (std::size_t s = 0; s < g.n; ++s) {
      for (std::size_t grp = 0; grp < g.groups; ++grp) {
        const std::size_t image_off = (s * g.c_in + grp * g.cin_g) * g.h * g.w;
        const T* dout = gy.data() + (s * g.c_out + grp * g.cout_g) * g.positions();
        const T* wg = sw->values.data() + grp * g.cout_g * g.patch();
        if (need_w) {
          const T* src = sx->values.data() + image_off;
          if (!g.pointwise()) {
            im2col(g, src, cols.data());
            src = cols.data();
          }
          detail::gemm_nt(g.cout_g, g.patch(), g.positions(), dout, src,
                          sw->grad.data() + grp * g.cout_g * g.patch());
        }
        if (need_x) {
          if (g.pointwise()) {
            detail::gemm_tn(g.patch(), g.positions(), g.cout_g, wg, dout, sx->grad.data() + image_off);
          } else {
            std::fill(dcols.begin(), dcols.end(), T(0));
            detail::gemm_tn(g.patch(), g.positions(), g.cout_g, wg, dout, dcols.data());
            col2im_add(g, dcols.data(), sx->grad.data() + image_off);
          }
        }
      }
    }
  });
  return out;
}

template Tensor<float> matmul<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> conv2d<float>(const Tensor<float>&, const Tensor<float>&, const Conv2dOptions&);
template Tensor<double> conv2d<double>(const Tensor<double>&, const Tensor<double>&, const Conv2dOptions&);

}  // namespace vaut
