// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace irisdeform::nn {
namespace {

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
std::vector<T>& scratch(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

template <typename T>
std::vector<T>& scratch2(std::size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

struct ConvGeom {
  int cin, h, w, k, stride, pad, ho, wo;
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const int p = g.ho * g.wo;
  for (int ci = 0; ci < g.cin; ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col + static_cast<std::size_t>((ci * g.k + ky) * g.k + kx) * p;
        for (int oy = 0; oy < g.ho; ++oy) {
          T* dst = row + static_cast<std::size_t>(oy) * g.wo;
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T{0});
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * g.w;
          if (g.stride == 1) {
            const int lo = std::clamp(g.pad - kx, 0, g.wo);
            const int hi = std::clamp(g.w + g.pad - kx, lo, g.wo);
            std::fill(dst, dst + lo, T{0});
            std::memcpy(dst + lo, src + lo - g.pad + kx, sizeof(T) * (hi - lo));
            std::fill(dst + hi, dst + g.wo, T{0});
          } else {
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T{0};
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  const int p = g.ho * g.wo;
  for (int ci = 0; ci < g.cin; ++ci) {
    T* xc = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + static_cast<std::size_t>((ci * g.k + ky) * g.k + kx) * p;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * g.wo;
          T* dst = xc + static_cast<std::size_t>(iy) * g.w;
          if (g.stride == 1) {
            const int lo = std::clamp(g.pad - kx, 0, g.wo);
            const int hi = std::clamp(g.w + g.pad - kx, lo, g.wo);
            T* d = dst - g.pad + kx;
            for (int ox = lo; ox < hi; ++ox) d[ox] += src[ox];
          } else {
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
}

template <typename T>
Tensor<T>* grad_of(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<double> w0, w1;
};

AxisTaps axis_taps(int in, int out) {
  AxisTaps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w0.resize(out);
  t.w1.resize(out);
  const double s = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * s - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const double l1 = src - i0;
    t.i0[o] = i0;
    t.i1[o] = i1;
    t.w0[o] = 1.0 - l1;
    t.w1[o] = l1;
  }
  return t;
}

int reflect_index(int i, int n) {
  if (i < n) return i;
  return 2 * (n - 1) - i;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square");
  if (ws.c != xs.c)
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, kernel expects " +
                     std::to_string(ws.c));
  if (bias.defined() && bias.shape() != Shape{1, ws.n, 1, 1})
    throw ShapeError("conv2d: bias shape " + bias.shape().str());
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: bad stride/padding");
  const int k = ws.h;
  const int ho = (xs.h + 2 * padding - k) / stride + 1;
  const int wo = (xs.w + 2 * padding - k) / stride + 1;
  if (ho < 1 || wo < 1) throw ShapeError("conv2d: input " + xs.str() + " smaller than kernel");
  const ConvGeom g{xs.c, xs.h, xs.w, k, stride, padding, ho, wo};
  const int cout = ws.n;
  const int kk = xs.c * k * k;
  const int p = ho * wo;
  const bool direct = (k == 1 && stride == 1 && padding == 0);

  Tensor<T> out(Shape{xs.n, cout, ho, wo});
  const T* wdat = weight.value().data();
  for (int n = 0; n < xs.n; ++n) {
    const T* xn = x.value().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
    const T* col = xn;
    if (!direct) {
      auto& buf = scratch<T>(static_cast<std::size_t>(kk) * p);
      im2col(xn, g, buf.data());
      col = buf.data();
    }
    T* yn = out.data() + static_cast<std::size_t>(n) * cout * p;
    gemm(false, false, cout, p, kk, T{1}, wdat, kk, col, p, T{0}, yn, p);
    if (bias.defined()) {
      const T* b = bias.value().data();
      for (int co = 0; co < cout; ++co) {
        T* row = yn + static_cast<std::size_t>(co) * p;
        const T bv = b[co];
        for (int i = 0; i < p; ++i) row[i] += bv;
      }
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result<T>(std::move(out), parents, [g, cout, kk, p, direct](Node<T>& self) {
    const Tensor<T>& xv = self.parents[0]->value;
    const Tensor<T>& wv = self.parents[1]->value;
    Tensor<T>* dx = grad_of(self, 0);
    Tensor<T>* dw = grad_of(self, 1);
    Tensor<T>* db = self.parents.size() > 2 ? grad_of(self, 2) : nullptr;
    const Shape xs = xv.shape();
    for (int n = 0; n < xs.n; ++n) {
      const T* dyn = self.grad.data() + static_cast<std::size_t>(n) * cout * p;
      const T* xn = xv.data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
      if (dw) {
        const T* col = xn;
        if (!direct) {
          auto& buf = scratch<T>(static_cast<std::size_t>(kk) * p);
          im2col(xn, g, buf.data());
          col = buf.data();
        }
        gemm(false, true, cout, kk, p, T{1}, dyn, p, col, p, T{1}, dw->data(), kk);
      }
      if (dx) {
        T* dxn = dx->data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
        if (direct) {
          gemm(true, false, kk, p, cout, T{1}, wv.data(), kk, dyn, p, T{1}, dxn, p);
        } else {
          auto& dcol = scratch2<T>(static_cast<std::size_t>(kk) * p);
          gemm(true, false, kk, p, cout, T{1}, wv.data(), kk, dyn, p, T{0}, dcol.data(), p);
          col2im_add(dcol.data(), g, dxn);
        }
      }
      if (db) {
        for (int co = 0; co < cout; ++co) {
          const T* row = dyn + static_cast<std::size_t>(co) * p;
          T acc{0};
          for (int i = 0; i < p; ++i) acc += row[i];
          db->data()[co] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  T* y = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = xv[i] > T{0} ? xv[i] : slope * xv[i];
  return make_result<T>(std::move(out), {x}, [slope](Node<T>& self) {
    Tensor<T>* dx = grad_of(self, 0);
    if (!dx) return;
    const T* xv = self.parents[0]->value.data();
    const T* dy = self.grad.data();
    T* d = dx->data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += xv[i] > T{0} ? dy[i] : slope * dy[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  T* y = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T v = xv[i];
    y[i] = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  }
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    Tensor<T>* dx = grad_of(self, 0);
    if (!dx) return;
    const T* y = self.value.data();
    const T* dy = self.grad.data();
    T* d = dx->data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += dy[i] * y[i] * (T{1} - y[i]);
  });
}

template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const Shape s = x.shape();
  if (gamma.shape() != Shape{1, s.c, 1, 1} || beta.shape() != Shape{1, s.c, 1, 1})
    throw ShapeError("instance_norm: affine parameters must be (1, C, 1, 1)");
  const std::size_t hw = s.plane();
  std::vector<T> mean(static_cast<std::size_t>(s.n) * s.c), inv_std(mean.size());
  Tensor<T> out(s);
  const T* xv = x.value().data();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t idx = static_cast<std::size_t>(n) * s.c + c;
      const T* src = xv + idx * hw;
      double m = 0.0;
      for (std::size_t i = 0; i < hw; ++i) m += src[i];
      m /= static_cast<double>(hw);
      double var = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = src[i] - m;
        var += d * d;
      }
      var /= static_cast<double>(hw);
      const T is = static_cast<T>(1.0 / std::sqrt(var + eps));
      mean[idx] = static_cast<T>(m);
      inv_std[idx] = is;
      T* dst = out.data() + idx * hw;
      const T mm = static_cast<T>(m);
      for (std::size_t i = 0; i < hw; ++i) dst[i] = gv[c] * (src[i] - mm) * is + bv[c];
    }
  }
  return make_result<T>(
      std::move(out), {x, gamma, beta},
      [mean = std::move(mean), inv_std = std::move(inv_std)](Node<T>& self) {
        const Tensor<T>& xv = self.parents[0]->value;
        const T* gv = self.parents[1]->value.data();
        Tensor<T>* dx = grad_of(self, 0);
        Tensor<T>* dg = grad_of(self, 1);
        Tensor<T>* db = grad_of(self, 2);
        const Shape s = xv.shape();
        const std::size_t hw = s.plane();
        for (int n = 0; n < s.n; ++n) {
          for (int c = 0; c < s.c; ++c) {
            const std::size_t idx = static_cast<std::size_t>(n) * s.c + c;
            const T* xs = xv.data() + idx * hw;
            const T* dy = self.grad.data() + idx * hw;
            const T m = mean[idx];
            const T is = inv_std[idx];
            double sum_dy = 0.0, sum_dy_xh = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
              const double xh = (xs[i] - m) * is;
              sum_dy += dy[i];
              sum_dy_xh += dy[i] * xh;
            }
            if (dg) dg->data()[c] += static_cast<T>(sum_dy_xh);
            if (db) db->data()[c] += static_cast<T>(sum_dy);
            if (dx) {
              T* d = dx->data() + idx * hw;
              const double mdy = sum_dy / static_cast<double>(hw);
              const double mdyx = sum_dy_xh / static_cast<double>(hw);
              const double k = static_cast<double>(gv[c]) * is;
              for (std::size_t i = 0; i < hw; ++i) {
                const double xh = (xs[i] - m) * is;
                d[i] += static_cast<T>(k * (dy[i] - mdy - xh * mdyx));
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape s0 = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw ShapeError("concat_channels: spatial/batch mismatch " + s.str() + " vs " + s0.str());
    total += s.c;
  }
  const std::size_t hw = s0.plane();
  Tensor<T> out(Shape{s0.n, total, s0.h, s0.w});
  for (int n = 0; n < s0.n; ++n) {
    T* dst = out.data() + static_cast<std::size_t>(n) * total * hw;
    for (const auto& p : parts) {
      const std::size_t chunk = static_cast<std::size_t>(p.shape().c) * hw;
      std::memcpy(dst, p.value().data() + n * chunk, sizeof(T) * chunk);
      dst += chunk;
    }
  }
  return make_result<T>(std::move(out), parts, [total, hw](Node<T>& self) {
    const int nb = self.value.shape().n;
    std::size_t off = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const std::size_t chunk = static_cast<std::size_t>(self.parents[i]->value.shape().c) * hw;
      if (Tensor<T>* d = grad_of(self, i)) {
        for (int n = 0; n < nb; ++n) {
          const T* src = self.grad.data() + static_cast<std::size_t>(n) * total * hw + off;
          T* dst = d->data() + n * chunk;
          for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
        }
      }
      off += chunk;
    }
  });
}

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w) {
  const Shape s = x.shape();
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: empty output");
  const AxisTaps ty = axis_taps(s.h, out_h);
  const AxisTaps tx = axis_taps(s.w, out_w);
  Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
  const int planes = s.n * s.c;
  for (int pl = 0; pl < planes; ++pl) {
    const T* src = x.value().data() + static_cast<std::size_t>(pl) * s.plane();
    T* dst = out.data() + static_cast<std::size_t>(pl) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const T* r0 = src + static_cast<std::size_t>(ty.i0[oy]) * s.w;
      const T* r1 = src + static_cast<std::size_t>(ty.i1[oy]) * s.w;
      const T wy0 = static_cast<T>(ty.w0[oy]), wy1 = static_cast<T>(ty.w1[oy]);
      for (int ox = 0; ox < out_w; ++ox) {
        const int a = tx.i0[ox], b = tx.i1[ox];
        const T wx0 = static_cast<T>(tx.w0[ox]), wx1 = static_cast<T>(tx.w1[ox]);
        dst[oy * out_w + ox] = wy0 * (wx0 * r0[a] + wx1 * r0[b]) + wy1 * (wx0 * r1[a] + wx1 * r1[b]);
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [ty, tx, out_h, out_w](Node<T>& self) {
    Tensor<T>* dx = grad_of(self, 0);
    if (!dx) return;
    const Shape s = self.parents[0]->value.shape();
    const int planes = s.n * s.c;
    for (int pl = 0; pl < planes; ++pl) {
      const T* dy = self.grad.data() + static_cast<std::size_t>(pl) * out_h * out_w;
      T* d = dx->data() + static_cast<std::size_t>(pl) * s.plane();
      for (int oy = 0; oy < out_h; ++oy) {
        T* r0 = d + static_cast<std::size_t>(ty.i0[oy]) * s.w;
        T* r1 = d + static_cast<std::size_t>(ty.i1[oy]) * s.w;
        const T wy0 = static_cast<T>(ty.w0[oy]), wy1 = static_cast<T>(ty.w1[oy]);
        for (int ox = 0; ox < out_w; ++ox) {
          const T g = dy[oy * out_w + ox];
          const int a = tx.i0[ox], b = tx.i1[ox];
          const T wx0 = static_cast<T>(tx.w0[ox]), wx1 = static_cast<T>(tx.w1[ox]);
          r0[a] += g * wy0 * wx0;
          r0[b] += g * wy0 * wx1;
          r1[a] += g * wy1 * wx0;
          r1[b] += g * wy1 * wx1;
        }
      }
    }
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int scale_factor) {
  const Shape s = x.shape();
  const int r = scale_factor;
  if (r < 1) throw ShapeError("pixel_shuffle: scale must be >= 1");
  if (s.c % (r * r) != 0)
    throw ShapeError("pixel_shuffle: " + std::to_string(s.c) + " channels not divisible by " +
                     std::to_string(r * r));
  const int oc = s.c / (r * r);
  const Shape os{s.n, oc, s.h * r, s.w * r};
  Tensor<T> out(os);
  auto map = [s, os, r](int n, int c, int y, int xx, int dy, int dx) {
    const std::size_t src = ((static_cast<std::size_t>(n) * s.c + (c * r * r + dy * r + dx)) * s.h + y) * s.w + xx;
    const std::size_t dst = ((static_cast<std::size_t>(n) * os.c + c) * os.h + (y * r + dy)) * os.w + (xx * r + dx);
    return std::pair{src, dst};
  };
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < oc; ++c)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx)
          for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx) {
              const auto [src, dst] = map(n, c, y, xx, dy, dx);
              out.data()[dst] = x.value().data()[src];
            }
  return make_result<T>(std::move(out), {x}, [s, oc, r, map](Node<T>& self) {
    Tensor<T>* d = grad_of(self, 0);
    if (!d) return;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < oc; ++c)
        for (int dy = 0; dy < r; ++dy)
          for (int dx = 0; dx < r; ++dx)
            for (int y = 0; y < s.h; ++y)
              for (int xx = 0; xx < s.w; ++xx) {
                const auto [src, dst] = map(n, c, y, xx, dy, dx);
                d->data()[src] += self.grad.data()[dst];
              }
  });
}

template <typename T>
Var<T> reflect_pad(const Var<T>& x, int bottom, int right) {
  const Shape s = x.shape();
  if (bottom < 0 || right < 0 || bottom >= s.h || right >= s.w)
    throw ShapeError("reflect_pad: padding must be smaller than the input extent");
  if (bottom == 0 && right == 0) return x;
  const Shape os{s.n, s.c, s.h + bottom, s.w + right};
  Tensor<T> out(os);
  const int planes = s.n * s.c;
  for (int pl = 0; pl < planes; ++pl) {
    const T* src = x.value().data() + static_cast<std::size_t>(pl) * s.plane();
    T* dst = out.data() + static_cast<std::size_t>(pl) * os.plane();
    for (int y = 0; y < os.h; ++y) {
      const int sy = reflect_index(y, s.h);
      for (int xx = 0; xx < os.w; ++xx) dst[y * os.w + xx] = src[sy * s.w + reflect_index(xx, s.w)];
    }
  }
  return make_result<T>(std::move(out), {x}, [s, os](Node<T>& self) {
    Tensor<T>* d = grad_of(self, 0);
    if (!d) return;
    const int planes = s.n * s.c;
    for (int pl = 0; pl < planes; ++pl) {
      const T* g = self.grad.data() + static_cast<std::size_t>(pl) * os.plane();
      T* dst = d->data() + static_cast<std::size_t>(pl) * s.plane();
      for (int y = 0; y < os.h; ++y) {
        const int sy = reflect_index(y, s.h);
        for (int xx = 0; xx < os.w; ++xx) dst[sy * s.w + reflect_index(xx, s.w)] += g[y * os.w + xx];
      }
    }
  });
}

template <typename T>
Var<T> crop(const Var<T>& x, int height, int width) {
  const Shape s = x.shape();
  if (height < 1 || width < 1 || height > s.h || width > s.w)
    throw ShapeError("crop: target larger than input");
  if (height == s.h && width == s.w) return x;
  const Shape os{s.n, s.c, height, width};
  Tensor<T> out(os);
  const int planes = s.n * s.c;
  for (int pl = 0; pl < planes; ++pl)
    for (int y = 0; y < height; ++y)
      std::memcpy(out.data() + static_cast<std::size_t>(pl) * os.plane() + y * width,
                  x.value().data() + static_cast<std::size_t>(pl) * s.plane() + y * s.w,
                  sizeof(T) * width);
  return make_result<T>(std::move(out), {x}, [s, os](Node<T>& self) {
    Tensor<T>* d = grad_of(self, 0);
    if (!d) return;
    const int planes = s.n * s.c;
    for (int pl = 0; pl < planes; ++pl)
      for (int y = 0; y < os.h; ++y) {
        const T* g = self.grad.data() + static_cast<std::size_t>(pl) * os.plane() + y * os.w;
        T* dst = d->data() + static_cast<std::size_t>(pl) * s.plane() + y * s.w;
        for (int xx = 0; xx < os.w; ++xx) dst[xx] += g[xx];
      }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.value().data()[i] + b.value().data()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (Tensor<T>* d = grad_of(self, k))
        for (std::size_t i = 0; i < self.grad.numel(); ++i) d->data()[i] += self.grad.data()[i];
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.value().data()[i] - b.value().data()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (Tensor<T>* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.numel(); ++i) d->data()[i] += self.grad.data()[i];
    if (Tensor<T>* d = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.numel(); ++i) d->data()[i] -= self.grad.data()[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.value().data()[i] * factor;
  return make_result<T>(std::move(out), {a}, [factor](Node<T>& self) {
    if (Tensor<T>* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.numel(); ++i) d->data()[i] += factor * self.grad.data()[i];
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.value().data()[i] + offset;
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    if (Tensor<T>* d = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.numel(); ++i) d->data()[i] += self.grad.data()[i];
  });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& scalars, const std::vector<T>& weights) {
  if (scalars.size() != weights.size()) throw ShapeError("weighted_sum: size mismatch");
  T total{0};
  for (std::size_t i = 0; i < scalars.size(); ++i) total += weights[i] * scalars[i].value().item();
  return make_result<T>(Tensor<T>(Shape{}, total), scalars, [weights](Node<T>& self) {
    const T g = self.grad.data()[0];
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      if (Tensor<T>* d = grad_of(self, i)) d->data()[0] += weights[i] * g;
  });
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mean_abs_diff");
  const std::size_t n = a.value().numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(a.value().data()[i]) - b.value().data()[i]);
  const T v = static_cast<T>(acc / static_cast<double>(n));
  return make_result<T>(Tensor<T>(Shape{}, v), {a, b}, [n](Node<T>& self) {
    const T g = self.grad.data()[0] / static_cast<T>(n);
    const T* av = self.parents[0]->value.data();
    const T* bv = self.parents[1]->value.data();
    Tensor<T>* da = grad_of(self, 0);
    Tensor<T>* db = grad_of(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = av[i] - bv[i];
      const T sgn = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
      if (da) da->data()[i] += g * sgn;
      if (db) db->data()[i] -= g * sgn;
    }
  });
}

template <typename T>
Var<T> mean_sq_diff(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mean_sq_diff");
  const std::size_t n = a.value().numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.value().data()[i]) - b.value().data()[i];
    acc += d * d;
  }
  const T v = static_cast<T>(acc / static_cast<double>(n));
  return make_result<T>(Tensor<T>(Shape{}, v), {a, b}, [n](Node<T>& self) {
    const T g = T{2} * self.grad.data()[0] / static_cast<T>(n);
    const T* av = self.parents[0]->value.data();
    const T* bv = self.parents[1]->value.data();
    Tensor<T>* da = grad_of(self, 0);
    Tensor<T>* db = grad_of(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = av[i] - bv[i];
      if (da) da->data()[i] += g * d;
      if (db) db->data()[i] -= g * d;
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x.value().data()[i];
  return make_result<T>(Tensor<T>(Shape{}, static_cast<T>(acc / static_cast<double>(n))), {x},
                        [n](Node<T>& self) {
                          Tensor<T>* d = grad_of(self, 0);
                          if (!d) return;
                          const T g = self.grad.data()[0] / static_cast<T>(n);
                          for (std::size_t i = 0; i < n; ++i) d->data()[i] += g;
                        });
}

template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets) {
  if (logits.shape() != targets.shape()) throw ShapeError("bce_with_logits: shape mismatch");
  const std::size_t n = targets.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.value().data()[i];
    const double t = targets.data()[i];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  return make_result<T>(Tensor<T>(Shape{}, static_cast<T>(acc / static_cast<double>(n))), {logits},
                        [targets, n](Node<T>& self) {
                          Tensor<T>* d = grad_of(self, 0);
                          if (!d) return;
                          const T g = self.grad.data()[0] / static_cast<T>(n);
                          const T* z = self.parents[0]->value.data();
                          for (std::size_t i = 0; i < n; ++i) {
                            const T s = T{1} / (T{1} + std::exp(-z[i]));
                            d->data()[i] += g * (s - targets.data()[i]);
                          }
                        });
}

template <typename T>
Var<T> channel_normalize(const Var<T>& x, T eps) {
  const Shape s = x.shape();
  const std::size_t hw = s.plane();
  Tensor<T> out(s);
  std::vector<T> norms(static_cast<std::size_t>(s.n) * hw);
  for (int n = 0; n < s.n; ++n) {
    const T* xn = x.value().data() + static_cast<std::size_t>(n) * s.c * hw;
    T* yn = out.data() + static_cast<std::size_t>(n) * s.c * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      T acc = eps;
      for (int c = 0; c < s.c; ++c) acc += xn[c * hw + i] * xn[c * hw + i];
      const T nv = std::sqrt(acc);
      norms[n * hw + i] = nv;
      for (int c = 0; c < s.c; ++c) yn[c * hw + i] = xn[c * hw + i] / nv;
    }
  }
  return make_result<T>(std::move(out), {x}, [norms = std::move(norms)](Node<T>& self) {
    Tensor<T>* d = grad_of(self, 0);
    if (!d) return;
    const Shape s = self.value.shape();
    const std::size_t hw = s.plane();
    for (int n = 0; n < s.n; ++n) {
      const T* yn = self.value.data() + static_cast<std::size_t>(n) * s.c * hw;
      const T* gn = self.grad.data() + static_cast<std::size_t>(n) * s.c * hw;
      T* dn = d->data() + static_cast<std::size_t>(n) * s.c * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        T dot{0};
        for (int c = 0; c < s.c; ++c) dot += gn[c * hw + i] * yn[c * hw + i];
        const T inv = T{1} / norms[n * hw + i];
        for (int c = 0; c < s.c; ++c) dn[c * hw + i] += (gn[c * hw + i] - yn[c * hw + i] * dot) * inv;
      }
    }
  });
}

template <typename T>
Var<T> sample_plan(const Var<T>& x, const std::vector<std::shared_ptr<const geometry::SamplingPlan>>& plans) {
  const Shape s = x.shape();
  if (s.c != 1) throw ShapeError("sample_plan: expects single-channel input");
  if (static_cast<int>(plans.size()) != s.n) throw ShapeError("sample_plan: one plan per sample required");
  const int gh = plans[0]->grid_height;
  const int gw = plans[0]->grid_width;
  for (const auto& p : plans) {
    if (p->image_height != s.h || p->image_width != s.w)
      throw ShapeError("sample_plan: plan built for a different image size");
    if (p->grid_height != gh || p->grid_width != gw) throw ShapeError("sample_plan: grid mismatch");
  }
  Tensor<T> out(Shape{s.n, 1, gh, gw});
  const std::size_t g = static_cast<std::size_t>(gh) * gw;
  for (int n = 0; n < s.n; ++n) {
    const T* src = x.value().data() + static_cast<std::size_t>(n) * s.plane();
    T* dst = out.data() + n * g;
    const auto& taps = plans[n]->taps;
    for (std::size_t i = 0; i < g; ++i) {
      const auto& t = taps[i];
      if (!t.valid) continue;
      T v{0};
      for (int q = 0; q < 4; ++q) v += static_cast<T>(t.weight[q]) * src[t.index[q]];
      dst[i] = v;
    }
  }
  return make_result<T>(std::move(out), {x}, [plans, g](Node<T>& self) {
    Tensor<T>* d = grad_of(self, 0);
    if (!d) return;
    const Shape s = self.parents[0]->value.shape();
    for (int n = 0; n < s.n; ++n) {
      T* dst = d->data() + static_cast<std::size_t>(n) * s.plane();
      const T* gr = self.grad.data() + n * g;
      const auto& taps = plans[n]->taps;
      for (std::size_t i = 0; i < g; ++i) {
        const auto& t = taps[i];
        if (!t.valid) continue;
        for (int q = 0; q < 4; ++q) dst[t.index[q]] += static_cast<T>(t.weight[q]) * gr[i];
      }
    }
  });
}

template <typename T>
Var<T> batch_slice(const Var<T>& x, int begin, int end) {
  const Shape s = x.shape();
  if (begin < 0 || end > s.n || begin >= end) throw ShapeError("batch_slice: bad range");
  if (begin == 0 && end == s.n) return x;
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  Tensor<T> out(Shape{end - begin, s.c, s.h, s.w});
  std::memcpy(out.data(), x.value().data() + begin * per, sizeof(T) * per * (end - begin));
  return make_result<T>(std::move(out), {x}, [begin, per](Node<T>& self) {
    Tensor<T>* d = grad_of(self, 0);
    if (!d) return;
    T* dst = d->data() + begin * per;
    for (std::size_t i = 0; i < self.grad.numel(); ++i) dst[i] += self.grad.data()[i];
  });
}

#define IRISDEFORM_INSTANTIATE_OPS(T)                                                         \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);              \
  template Var<T> leaky_relu(const Var<T>&, T);                                               \
  template Var<T> sigmoid(const Var<T>&);                                                     \
  template Var<T> instance_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);              \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                                \
  template Var<T> resize_bilinear(const Var<T>&, int, int);                                   \
  template Var<T> pixel_shuffle(const Var<T>&, int);                                          \
  template Var<T> reflect_pad(const Var<T>&, int, int);                                       \
  template Var<T> crop(const Var<T>&, int, int);                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                          \
  template Var<T> scale(const Var<T>&, T);                                                    \
  template Var<T> add_scalar(const Var<T>&, T);                                               \
  template Var<T> weighted_sum(const std::vector<Var<T>>&, const std::vector<T>&);            \
  template Var<T> mean_abs_diff(const Var<T>&, const Var<T>&);                                \
  template Var<T> mean_sq_diff(const Var<T>&, const Var<T>&);                                 \
  template Var<T> mean(const Var<T>&);                                                        \
  template Var<T> bce_with_logits(const Var<T>&, const Tensor<T>&);                           \
  template Var<T> channel_normalize(const Var<T>&, T);                                        \
  template Var<T> sample_plan(const Var<T>&, const std::vector<std::shared_ptr<const geometry::SamplingPlan>>&); \
  template Var<T> batch_slice(const Var<T>&, int, int);

IRISDEFORM_INSTANTIATE_OPS(float)
IRISDEFORM_INSTANTIATE_OPS(double)

}  // namespace irisdeform::nn
