#include "evlt/numgrid/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>

#include "evlt/simd/kernels.hpp"

namespace evlt::numgrid {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;
template <typename T>
using Backward = std::function<void(detail::Node<T>&)>;

template <typename T>
Tensor<T> record(const char* op, Shape shape, std::vector<T> value,
                 std::vector<NodePtr<T>> inputs, Backward<T> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  const bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [](const NodePtr<T>& p) { return p->requires_grad; });
  if (needs_grad) {
    node->requires_grad = true;
    node->parents = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
  require(x.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got " + shape_str(x.shape()));
}

template <typename T>
const simd::KernelTable<T>& K() {
  return simd::kernels<T>();
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  K<T>().add(out.size(), a.ptr(), b.ptr(), out.data());
  return record<T>("add", a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) K<T>().axpy(self.grad.size(), T(1), self.grad.data(), p->ensure_grad().data());
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return record<T>("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
    const std::size_t n = self.grad.size();
    if (self.parents[0]->requires_grad)
      K<T>().axpy(n, T(1), self.grad.data(), self.parents[0]->ensure_grad().data());
    if (self.parents[1]->requires_grad)
      K<T>().axpy(n, T(-1), self.grad.data(), self.parents[1]->ensure_grad().data());
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  K<T>().mul(out.size(), a.ptr(), b.ptr(), out.data());
  return record<T>("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const std::size_t n = self.grad.size();
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += s;
  return record<T>("add_scalar", a.shape(), std::move(out), {a.node()}, [](detail::Node<T>& self) {
    K<T>().axpy(self.grad.size(), T(1), self.grad.data(), self.parents[0]->ensure_grad().data());
  });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return record<T>("mul_scalar", a.shape(), std::move(out), {a.node()}, [s](detail::Node<T>& self) {
    K<T>().axpy(self.grad.size(), s, self.grad.data(), self.parents[0]->ensure_grad().data());
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require(x.rank() >= 1 && bias.rank() == 1 && bias.dim(0) == x.shape().back(),
          "add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
              shape_str(x.shape()));
  const std::size_t d = bias.numel();
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r)
    K<T>().axpy(d, T(1), bias.ptr(), out.data() + r * d);
  return record<T>("add_bias", x.shape(), std::move(out), {x.node(), bias.node()},
                   [rows, d](detail::Node<T>& self) {
                     if (self.parents[0]->requires_grad)
                       K<T>().axpy(self.grad.size(), T(1), self.grad.data(),
                                   self.parents[0]->ensure_grad().data());
                     if (self.parents[1]->requires_grad) {
                       auto& g = self.parents[1]->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         K<T>().axpy(d, T(1), self.grad.data() + r * d, g.data());
                     }
                   });
}

// ------------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  std::vector<T> out(m * n);
  K<T>().gemm(false, false, m, n, k, a.ptr(), k, b.ptr(), n, out.data(), n, false);
  return record<T>("matmul", {m, n}, std::move(out), {a.node(), b.node()},
                   [m, n, k](detail::Node<T>& self) {
                     auto& pa = *self.parents[0];
                     auto& pb = *self.parents[1];
                     if (pa.requires_grad)
                       K<T>().gemm(false, true, m, k, n, self.grad.data(), n, pb.value.data(), n,
                                   pa.ensure_grad().data(), k, true);
                     if (pb.requires_grad)
                       K<T>().gemm(true, false, k, n, m, pa.value.data(), k, self.grad.data(), n,
                                   pb.ensure_grad().data(), n, true);
                   });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  require(b.dim(0) == batch && b.dim(1) == k,
          "bmm: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<T> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i)
    K<T>().gemm(false, false, m, n, k, a.ptr() + i * m * k, k, b.ptr() + i * k * n, n,
                out.data() + i * m * n, n, false);
  return record<T>("bmm", {batch, m, n}, std::move(out), {a.node(), b.node()},
                   [batch, m, n, k](detail::Node<T>& self) {
                     auto& pa = *self.parents[0];
                     auto& pb = *self.parents[1];
                     for (std::size_t i = 0; i < batch; ++i) {
                       const T* g = self.grad.data() + i * m * n;
                       if (pa.requires_grad)
                         K<T>().gemm(false, true, m, k, n, g, n, pb.value.data() + i * k * n, n,
                                     pa.ensure_grad().data() + i * m * k, k, true);
                       if (pb.requires_grad)
                         K<T>().gemm(true, false, k, n, m, pa.value.data() + i * m * k, k, g, n,
                                     pb.ensure_grad().data() + i * k * n, n, true);
                     }
                   });
}

// -------------------------------------------------------------- convolution

namespace {

struct ConvGeom {
  std::size_t c, h, w, o, k, oh, ow;
  int stride, pad;
  std::size_t col_rows() const { return c * k * k; }
  std::size_t col_cols() const { return oh * ow; }
};

// Output columns [x0, x1) read inside the input row for kernel offset kx;
// the rest fall in the zero padding.
inline void valid_span(const ConvGeom& g, std::size_t kx, std::size_t& x0, std::size_t& x1) {
  const long off = static_cast<long>(kx) - static_cast<long>(g.pad);
  const long s = static_cast<long>(g.stride);
  long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  long hi = (static_cast<long>(g.w) - 1 - off) < 0 ? 0 : (static_cast<long>(g.w) - 1 - off) / s + 1;
  lo = std::min<long>(lo, static_cast<long>(g.ow));
  hi = std::clamp<long>(hi, lo, static_cast<long>(g.ow));
  x0 = static_cast<std::size_t>(lo);
  x1 = static_cast<std::size_t>(hi);
}

// Columns for output rows [y0, y1): row (c, ky, kx) of the result holds the
// input samples under that tap for every output pixel of the slab.
template <typename T>
void im2col(const ConvGeom& g, const T* x, std::size_t y0, std::size_t y1, T* cols) {
  const std::size_t n = (y1 - y0) * g.ow;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* dst = cols + ((c * g.k + ky) * g.k + kx) * n;
        std::size_t x0, x1;
        valid_span(g, kx, x0, x1);
        const long off = static_cast<long>(kx) - static_cast<long>(g.pad);
        for (std::size_t oy = y0; oy < y1; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          T* row = dst + (oy - y0) * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill_n(row, g.ow, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          std::fill_n(row, x0, T(0));
          if (g.stride == 1) {
            std::copy_n(src + (static_cast<long>(x0) + off), x1 - x0, row + x0);
          } else {
            for (std::size_t ox = x0; ox < x1; ++ox) row[ox] = src[static_cast<long>(ox * g.stride) + off];
          }
          std::fill_n(row + x1, g.ow - x1, T(0));
        }
      }
}

template <typename T>
void col2im_add(const ConvGeom& g, const T* cols, std::size_t y0, std::size_t y1, T* dx) {
  const std::size_t n = (y1 - y0) * g.ow;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* src = cols + ((c * g.k + ky) * g.k + kx) * n;
        std::size_t x0, x1;
        valid_span(g, kx, x0, x1);
        const long off = static_cast<long>(kx) - static_cast<long>(g.pad);
        for (std::size_t oy = y0; oy < y1; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* row = src + (oy - y0) * g.ow;
          if (g.stride == 1) {
            T* d = dst + (static_cast<long>(x0) + off);
            for (std::size_t i = 0, m = x1 - x0; i < m; ++i) d[i] += row[x0 + i];
          } else {
            for (std::size_t ox = x0; ox < x1; ++ox) dst[static_cast<long>(ox * g.stride) + off] += row[ox];
          }
        }
      }
}

// Output rows per im2col slab: about 512 pixels keeps the column buffer in
// L2 for the channel counts used here.
inline std::size_t slab_rows(const ConvGeom& g) { return std::max<std::size_t>(1, 512 / g.ow); }

template <typename T>
std::vector<T>& slab_buffer(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  require(stride >= 1 && padding >= 0, "conv2d: stride must be >= 1 and padding >= 0");
  ConvGeom g{};
  g.c = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.o = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  require(weight.dim(1) == g.c && weight.dim(3) == g.k,
          "conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
              shape_str(x.shape()));
  const long span_h = static_cast<long>(g.h) + 2L * padding - static_cast<long>(g.k);
  const long span_w = static_cast<long>(g.w) + 2L * padding - static_cast<long>(g.k);
  require(span_h >= 0 && span_w >= 0, "conv2d: kernel larger than padded input");
  g.oh = static_cast<std::size_t>(span_h / stride + 1);
  g.ow = static_cast<std::size_t>(span_w / stride + 1);
  const bool has_bias = bias.defined();
  if (has_bias)
    require(bias.rank() == 1 && bias.dim(0) == g.o, "conv2d: bias must have shape [O]");

  // 1x1 stride-1 convolutions read the input directly as the column matrix.
  const bool direct = g.k == 1 && stride == 1 && padding == 0;
  const std::size_t plane = g.col_cols(), rows = g.col_rows();
  std::vector<T> out(g.o * plane);
  if (direct) {
    K<T>().gemm(false, false, g.o, plane, rows, weight.ptr(), rows, x.ptr(), plane, out.data(), plane, false);
  } else {
    const std::size_t step = slab_rows(g);
    auto& buf = slab_buffer<T>(rows * step * g.ow);
    for (std::size_t y0 = 0; y0 < g.oh; y0 += step) {
      const std::size_t y1 = std::min(g.oh, y0 + step), n = (y1 - y0) * g.ow;
      im2col(g, x.ptr(), y0, y1, buf.data());
      K<T>().gemm(false, false, g.o, n, rows, weight.ptr(), rows, buf.data(), n, out.data() + y0 * g.ow, plane,
                  false);
    }
  }
  if (has_bias)
    for (std::size_t o = 0; o < g.o; ++o) {
      const T b = bias[o];
      T* row = out.data() + o * plane;
      for (std::size_t i = 0; i < plane; ++i) row[i] += b;
    }

  std::vector<NodePtr<T>> inputs{x.node(), weight.node()};
  if (has_bias) inputs.push_back(bias.node());
  return record<T>(
      "conv2d", {g.o, g.oh, g.ow}, std::move(out), std::move(inputs),
      [g, direct, has_bias](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const std::size_t plane = g.col_cols();
        const std::size_t rows = g.col_rows();
        const T* dy = self.grad.data();
        if (has_bias && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->ensure_grad();
          for (std::size_t o = 0; o < g.o; ++o) gb[o] += K<T>().sum(plane, dy + o * plane);
        }
        if (direct) {
          if (pw.requires_grad)
            K<T>().gemm(false, true, g.o, rows, plane, dy, plane, px.value.data(), plane, pw.ensure_grad().data(),
                        rows, true);
          if (px.requires_grad)
            K<T>().gemm(true, false, rows, plane, g.o, pw.value.data(), rows, dy, plane, px.ensure_grad().data(),
                        plane, true);
          return;
        }
        // Columns are rebuilt slab by slab rather than kept from the forward
        // pass; storing them for every convolution would not fit in cache.
        const std::size_t step = slab_rows(g);
        auto& buf = slab_buffer<T>(2 * rows * step * g.ow);
        T* cols = buf.data();
        T* dcols = buf.data() + rows * step * g.ow;
        T* gw = pw.requires_grad ? pw.ensure_grad().data() : nullptr;
        T* gx = px.requires_grad ? px.ensure_grad().data() : nullptr;
        for (std::size_t y0 = 0; y0 < g.oh; y0 += step) {
          const std::size_t y1 = std::min(g.oh, y0 + step), n = (y1 - y0) * g.ow;
          const T* dys = dy + y0 * g.ow;
          if (gw) {
            im2col(g, px.value.data(), y0, y1, cols);
            K<T>().gemm(false, true, g.o, rows, n, dys, plane, cols, n, gw, rows, true);
          }
          if (gx) {
            K<T>().gemm(true, false, rows, n, g.o, pw.value.data(), rows, dys, plane, dcols, n, false);
            col2im_add(g, dcols, y0, y1, gx);
          }
        }
      });
}

// --------------------------------------------------------------- resampling

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor) {
  require_rank(x, 3, "upsample_nearest");
  require(factor >= 1, "upsample_nearest: factor must be >= 1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), f = static_cast<std::size_t>(factor);
  const std::size_t oh = h * f, ow = w * f;
  std::vector<T> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        out[(ch * oh + y) * ow + xx] = x[(ch * h + y / f) * w + xx / f];
  return record<T>("upsample_nearest", {c, oh, ow}, std::move(out), {x.node()},
                   [c, h, w, f, oh, ow](detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t ch = 0; ch < c; ++ch)
                       for (std::size_t y = 0; y < oh; ++y)
                         for (std::size_t xx = 0; xx < ow; ++xx)
                           g[(ch * h + y / f) * w + xx / f] += self.grad[(ch * oh + y) * ow + xx];
                   });
}

namespace {

struct LerpTap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<LerpTap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<LerpTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double w1 = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - w1, w1};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "resize_bilinear");
  require(out_h > 0 && out_w > 0, "resize_bilinear: target must be at least 1x1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto ty = bilinear_taps(h, out_h);
  auto tx = bilinear_taps(w, out_w);
  std::vector<T> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = x.ptr() + ch * h * w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const auto& b = tx[xx];
        const double v = a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1]) +
                         a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]);
        out[(ch * out_h + y) * out_w + xx] = static_cast<T>(v);
      }
    }
  }
  return record<T>("resize_bilinear", {c, out_h, out_w}, std::move(out), {x.node()},
                   [c, h, w, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t ch = 0; ch < c; ++ch) {
                       T* dst = g.data() + ch * h * w;
                       for (std::size_t y = 0; y < out_h; ++y) {
                         const auto& a = ty[y];
                         for (std::size_t xx = 0; xx < out_w; ++xx) {
                           const auto& b = tx[xx];
                           const double gv = self.grad[(ch * out_h + y) * out_w + xx];
                           dst[a.i0 * w + b.i0] += static_cast<T>(gv * a.w0 * b.w0);
                           dst[a.i0 * w + b.i1] += static_cast<T>(gv * a.w0 * b.w1);
                           dst[a.i1 * w + b.i0] += static_cast<T>(gv * a.w1 * b.w0);
                           dst[a.i1 * w + b.i1] += static_cast<T>(gv * a.w1 * b.w1);
                         }
                       }
                     }
                   });
}

template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "adaptive_avg_pool2d");
  require(out_h > 0 && out_w > 0, "adaptive_avg_pool2d: target must be at least 1x1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto bins = [](std::size_t in, std::size_t out) {
    std::vector<std::pair<std::size_t, std::size_t>> r(out);
    for (std::size_t o = 0; o < out; ++o)
      r[o] = {(o * in) / out, ((o + 1) * in + out - 1) / out};
    return r;
  };
  auto by = bins(h, out_h);
  auto bx = bins(w, out_w);
  std::vector<T> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        T s = 0;
        for (std::size_t y = by[oy].first; y < by[oy].second; ++y)
          for (std::size_t xx = bx[ox].first; xx < bx[ox].second; ++xx) s += x[(ch * h + y) * w + xx];
        const auto count = (by[oy].second - by[oy].first) * (bx[ox].second - bx[ox].first);
        out[(ch * out_h + oy) * out_w + ox] = s / static_cast<T>(count);
      }
  return record<T>("adaptive_avg_pool2d", {c, out_h, out_w}, std::move(out), {x.node()},
                   [c, h, w, out_h, out_w, by = std::move(by), bx = std::move(bx)](detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t ch = 0; ch < c; ++ch)
                       for (std::size_t oy = 0; oy < out_h; ++oy)
                         for (std::size_t ox = 0; ox < out_w; ++ox) {
                           const auto count = (by[oy].second - by[oy].first) * (bx[ox].second - bx[ox].first);
                           const T gv = self.grad[(ch * out_h + oy) * out_w + ox] / static_cast<T>(count);
                           for (std::size_t y = by[oy].first; y < by[oy].second; ++y)
                             for (std::size_t xx = bx[ox].first; xx < bx[ox].second; ++xx)
                               g[(ch * h + y) * w + xx] += gv;
                         }
                   });
}

// -------------------------------------------------------------- activations

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  K<T>().relu(out.size(), x.ptr(), out.data());
  return record<T>("relu", x.shape(), std::move(out), {x.node()}, [](detail::Node<T>& self) {
    auto& px = *self.parents[0];
    auto& g = px.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (px.value[i] > T(0)) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
    // Saturated logits would round to exactly 0 or 1; keep the open interval.
    out[i] = std::clamp(out[i], std::numeric_limits<T>::denorm_min(), T(1) - std::numeric_limits<T>::epsilon() / 2);
  }
  return record<T>("sigmoid", x.shape(), std::move(out), {x.node()}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = self.value[i];
      g[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  require(lo <= hi, "clamp: lo must not exceed hi");
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x[i], lo, hi);
  return record<T>("clamp", x.shape(), std::move(out), {x.node()}, [lo, hi](detail::Node<T>& self) {
    auto& px = *self.parents[0];
    auto& g = px.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (px.value[i] > lo && px.value[i] < hi) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  require(axis < x.rank(), "softmax: axis out of range for " + shape_str(x.shape()));
  const auto& s = x.shape();
  const std::size_t len = s[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = x[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
      T z = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(x[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  return record<T>("softmax", s, std::move(out), {x.node()},
                   [outer, inner, len](detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t in = 0; in < inner; ++in) {
                         const std::size_t base = o * len * inner + in;
                         T dotp = 0;
                         for (std::size_t j = 0; j < len; ++j)
                           dotp += self.grad[base + j * inner] * self.value[base + j * inner];
                         for (std::size_t j = 0; j < len; ++j) {
                           const std::size_t idx = base + j * inner;
                           g[idx] += self.value[idx] * (self.grad[idx] - dotp);
                         }
                       }
                   });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require(x.rank() >= 1, "layer_norm: rank must be >= 1");
  const std::size_t d = x.shape().back();
  require(gamma.rank() == 1 && gamma.dim(0) == d && beta.rank() == 1 && beta.dim(0) == d,
          "layer_norm: gamma/beta must have shape [" + std::to_string(d) + "]");
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.ptr() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (row[j] - mu) * is;
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = gamma[j] * xh + beta[j];
    }
  }
  return record<T>(
      "layer_norm", x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
      [rows, d, xhat, inv_std](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        for (std::size_t r = 0; r < rows; ++r) {
          const T* dy = self.grad.data() + r * d;
          const T* xh = xhat->data() + r * d;
          if (pg.requires_grad) {
            auto& gg = pg.ensure_grad();
            for (std::size_t j = 0; j < d; ++j) gg[j] += dy[j] * xh[j];
          }
          if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            for (std::size_t j = 0; j < d; ++j) gb[j] += dy[j];
          }
          if (px.requires_grad) {
            auto& gx = px.ensure_grad();
            T mean_dxh = 0, mean_dxh_xh = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = dy[j] * pg.value[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[j];
            }
            mean_dxh /= static_cast<T>(d);
            mean_dxh_xh /= static_cast<T>(d);
            const T is = (*inv_std)[r];
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = dy[j] * pg.value[j];
              gx[r * d + j] += is * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
            }
          }
        }
      });
}

// ---------------------------------------------------------------- structure

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts.front().shape();
  require(axis < s0.size(), "concat: axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  std::vector<std::size_t> chunk;  // contiguous block per outer index, per part
  for (const auto& p : parts) {
    require(p.rank() == s0.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (i != axis)
        require(p.dim(i) == s0[i], "concat: extent mismatch " + shape_str(p.shape()) + " vs " +
                                       shape_str(s0));
    out_shape[axis] += p.dim(axis);
    chunk.push_back(p.numel() / outer);
  }
  const std::size_t row = std::accumulate(chunk.begin(), chunk.end(), std::size_t{0});
  std::vector<T> out(outer * row);
  std::vector<NodePtr<T>> inputs;
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const T* src = parts[pi].ptr();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * chunk[pi], chunk[pi], out.data() + o * row + offset);
    offset += chunk[pi];
    inputs.push_back(parts[pi].node());
  }
  return record<T>("concat", out_shape, std::move(out), std::move(inputs),
                   [outer, row, chunk](detail::Node<T>& self) {
                     std::size_t offset = 0;
                     for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
                       auto& p = *self.parents[pi];
                       if (p.requires_grad) {
                         auto& g = p.ensure_grad();
                         for (std::size_t o = 0; o < outer; ++o)
                           K<T>().axpy(chunk[pi], T(1), self.grad.data() + o * row + offset,
                                       g.data() + o * chunk[pi]);
                       }
                       offset += chunk[pi];
                     }
                   });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require(axis < x.rank(), "slice: axis out of range");
  require(begin < end && end <= x.dim(axis), "slice: invalid range on axis of extent " +
                                                 std::to_string(x.dim(axis)));
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = end - begin, full = s[axis];
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<T> out(outer * len * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.ptr() + (o * full + begin) * inner, len * inner, out.data() + o * len * inner);
  return record<T>("slice", out_shape, std::move(out), {x.node()},
                   [outer, inner, len, full, begin](detail::Node<T>& self) {
                     auto& g = self.parents[0]->ensure_grad();
                     for (std::size_t o = 0; o < outer; ++o)
                       K<T>().axpy(len * inner, T(1), self.grad.data() + o * len * inner,
                                   g.data() + (o * full + begin) * inner);
                   });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape: " + shape_str(x.shape()) + " -> " +
                                               shape_str(shape) + " changes element count");
  std::vector<T> out(x.data().begin(), x.data().end());
  return record<T>("reshape", std::move(shape), std::move(out), {x.node()}, [](detail::Node<T>& self) {
    K<T>().axpy(self.grad.size(), T(1), self.grad.data(), self.parents[0]->ensure_grad().data());
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x, 2, "transpose");
  return permute(x, {1, 0});
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order) {
  const std::size_t r = x.rank();
  require(order.size() == r, "permute: order length must equal rank");
  std::vector<bool> seen(r, false);
  for (std::size_t a : order) {
    require(a < r && !seen[a], "permute: order is not a permutation");
    seen[a] = true;
  }
  const auto& s = x.shape();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);  // input stride for each output axis
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = s[order[i]];
    src_stride[i] = in_stride[order[i]];
  }
  const std::size_t n = x.numel();
  // Output position -> input position map, reused by the backward pass.
  auto map = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*map)[i] = src;
    for (std::size_t a = r; a-- > 0;) {
      ++idx[a];
      src += src_stride[a];
      if (idx[a] < out_shape[a]) break;
      src -= src_stride[a] * idx[a];
      idx[a] = 0;
    }
  }
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[(*map)[i]];
  return record<T>("permute", out_shape, std::move(out), {x.node()}, [map](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < map->size(); ++i) g[(*map)[i]] += self.grad[i];
  });
}

// --------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const T s = K<T>().sum(x.numel(), x.ptr());
  return record<T>("sum", {1}, {s}, {x.node()}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const T gv = self.grad[0];
    for (auto& v : g) v += gv;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const T n = static_cast<T>(x.numel());
  const T s = K<T>().sum(x.numel(), x.ptr()) / n;
  return record<T>("mean", {1}, {s}, {x.node()}, [n](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const T gv = self.grad[0] / n;
    for (auto& v : g) v += gv;
  });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "l1_loss");
  const std::size_t n = a.numel();
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
  s /= static_cast<T>(n);
  return record<T>("l1_loss", {1}, {s}, {a.node(), b.node()}, [n](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const T gv = self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = pa.value[i] - pb.value[i];
      const T sg = d > T(0) ? gv : (d < T(0) ? -gv : T(0));
      if (pa.requires_grad) pa.ensure_grad()[i] += sg;
      if (pb.requires_grad) pb.ensure_grad()[i] -= sg;
    }
  });
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& p, const Tensor<T>& target) {
  require_same_shape(p, target, "bce_loss");
  require(!target.requires_grad(), "bce_loss: target must be a constant");
  const std::size_t n = p.numel();
  const T lo = static_cast<T>(kBceClamp), hi = T(1) - static_cast<T>(kBceClamp);
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pc = std::clamp(p[i], lo, hi);
    const double t = target[i];
    s -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
  }
  const T loss = static_cast<T>(s / static_cast<double>(n));
  return record<T>("bce_loss", {1}, {loss}, {p.node(), target.node()}, [n, lo, hi](detail::Node<T>& self) {
    auto& pp = *self.parents[0];
    auto& pt = *self.parents[1];
    auto& g = pp.ensure_grad();
    const T gv = self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T pv = pp.value[i];
      if (pv <= lo || pv >= hi) continue;
      const T t = pt.value[i];
      g[i] += gv * (pv - t) / (pv * (T(1) - pv));
    }
  });
}

// ---------------------------------------------------- explicit instantiation

#define EVLT_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                        \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                        \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
  template Tensor<T> upsample_nearest(const Tensor<T>&, int);                                \
  template Tensor<T> resize_bilinear(const Tensor<T>&, std::size_t, std::size_t);            \
  template Tensor<T> adaptive_avg_pool2d(const Tensor<T>&, std::size_t, std::size_t);        \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                          \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);    \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                     \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);         \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
  template Tensor<T> transpose(const Tensor<T>&);                                            \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);             \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&);

EVLT_INSTANTIATE_OPS(float)
EVLT_INSTANTIATE_OPS(double)

}  // namespace evlt::numgrid
