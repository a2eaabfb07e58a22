#include "cbfn/ops.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace cbfn {
namespace {

using std::int64_t;

int64_t div_ceil_nonneg(int64_t a, int64_t b) {
  return a > 0 ? (a + b - 1) / b : 0;
}

template <typename T>
void check_bias(const Tensor<T>& bias, int64_t c_out, const char* who) {
  if (!bias.defined()) return;
  if (bias.numel() != c_out) {
    throw ShapeError(std::string(who) + ": bias has " +
                     std::to_string(bias.numel()) + " entries for " +
                     std::to_string(c_out) + " output channels");
  }
}

template <typename T>
bool wants_grad(Graph<T>* g, std::initializer_list<const Tensor<T>*> inputs) {
  if (g == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace
// ---------------------------------------------------------------------------
// conv2d / conv_transpose2d
//
// Both run on an im2col + GEMM-style engine: patches are gathered into a
// (K x Mt) tile (K = c_in*kh*kw), the forward pass and both gradient
// passes are then long unit-stride axpy sweeps. Per-element accumulation
// order is a pure function of shapes (k ascending, tiles partition the
// spatial axis), so results are bitwise reproducible run to run.

namespace {

// Upper bound on patch-tile size, in scalars.
constexpr int64_t kTileBudget = int64_t(1) << 20;

struct ConvGeom {
  Shape xs, ws, os;  // ws is (c_out, c_in, kh, kw)
  int64_t stride = 1;
  Pad2 pb;

  int64_t patch_len() const { return ws.c * ws.h * ws.w; }
  int64_t cols() const { return os.h * os.w; }
  int64_t tile_cols() const {
    const int64_t want = std::max<int64_t>(64, kTileBudget / patch_len());
    return std::min(cols(), want);
  }
};

// Writes columns [m0, m0+mt) of the patch matrix for batch element n,
// laid out (K rows x mt columns).
template <typename T>
void im2col_tile(const T* x, const ConvGeom& g, int64_t n, int64_t m0, int64_t mt,
                 T* p) {
  const Shape& xs = g.xs;
  const Shape& ws = g.ws;
  const Shape& os = g.os;
  const T* xbase = x + n * xs.c * xs.h * xs.w;
  int64_t k = 0;
  for (int64_t ci = 0; ci < ws.c; ++ci) {
    const T* xp = xbase + ci * xs.h * xs.w;
    for (int64_t kh = 0; kh < ws.h; ++kh) {
      for (int64_t kw = 0; kw < ws.w; ++kw, ++k) {
        T* __restrict prow = p + k * mt;
        int64_t mc = 0;
        int64_t oh = m0 / os.w;
        int64_t ow = m0 % os.w;
        while (mc < mt) {
          const int64_t run = std::min(os.w - ow, mt - mc);
          const int64_t ih = oh * g.stride - g.pb.h + kh;
          if (ih < 0 || ih >= xs.h) {
            for (int64_t r = 0; r < run; ++r) prow[mc + r] = T(0);
          } else {
            const T* xrow = xp + ih * xs.w;
            if (g.stride == 1) {
              const int64_t base = ow - g.pb.w + kw;
              for (int64_t r = 0; r < run; ++r) {
                const int64_t iw = base + r;
                prow[mc + r] = (iw >= 0 && iw < xs.w) ? xrow[iw] : T(0);
              }
            } else {
              for (int64_t r = 0; r < run; ++r) {
                const int64_t iw = (ow + r) * g.stride - g.pb.w + kw;
                prow[mc + r] = (iw >= 0 && iw < xs.w) ? xrow[iw] : T(0);
              }
            }
          }
          mc += run;
          ow += run;
          if (ow == os.w) {
            ow = 0;
            ++oh;
          }
        }
      }
    }
  }
}

// Scatter-adds a (K x mt) gradient tile back onto the input gradient of
// batch element n (the adjoint of im2col_tile).
template <typename T>
void col2im_tile(T* gx, const ConvGeom& g, int64_t n, int64_t m0, int64_t mt,
                 const T* p) {
  const Shape& xs = g.xs;
  const Shape& ws = g.ws;
  const Shape& os = g.os;
  T* xbase = gx + n * xs.c * xs.h * xs.w;
  int64_t k = 0;
  for (int64_t ci = 0; ci < ws.c; ++ci) {
    T* xp = xbase + ci * xs.h * xs.w;
    for (int64_t kh = 0; kh < ws.h; ++kh) {
      for (int64_t kw = 0; kw < ws.w; ++kw, ++k) {
        const T* __restrict prow = p + k * mt;
        int64_t mc = 0;
        int64_t oh = m0 / os.w;
        int64_t ow = m0 % os.w;
        while (mc < mt) {
          const int64_t run = std::min(os.w - ow, mt - mc);
          const int64_t ih = oh * g.stride - g.pb.h + kh;
          if (ih >= 0 && ih < xs.h) {
            T* xrow = xp + ih * xs.w;
            if (g.stride == 1) {
              const int64_t base = ow - g.pb.w + kw;
              for (int64_t r = 0; r < run; ++r) {
                const int64_t iw = base + r;
                if (iw >= 0 && iw < xs.w) xrow[iw] += prow[mc + r];
              }
            } else {
              for (int64_t r = 0; r < run; ++r) {
                const int64_t iw = (ow + r) * g.stride - g.pb.w + kw;
                if (iw >= 0 && iw < xs.w) xrow[iw] += prow[mc + r];
              }
            }
          }
          mc += run;
          ow += run;
          if (ow == os.w) {
            ow = 0;
            ++oh;
          }
        }
      }
    }
  }
}

// C[co][m0..m0+mt) += A[co] . P, blocked four output channels at a time.
template <typename T>
void gemm_rows(const T* A, const T* P, T* C, int64_t co_n, int64_t K, int64_t mt,
               int64_t ldc, int64_t m0) {
  int64_t co = 0;
  for (; co + 4 <= co_n; co += 4) {
    T* __restrict c0 = C + (co + 0) * ldc + m0;
    T* __restrict c1 = C + (co + 1) * ldc + m0;
    T* __restrict c2 = C + (co + 2) * ldc + m0;
    T* __restrict c3 = C + (co + 3) * ldc + m0;
    const T* a0 = A + (co + 0) * K;
    const T* a1 = A + (co + 1) * K;
    const T* a2 = A + (co + 2) * K;
    const T* a3 = A + (co + 3) * K;
    for (int64_t k = 0; k < K; ++k) {
      const T* __restrict pr = P + k * mt;
      const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
      for (int64_t mc = 0; mc < mt; ++mc) {
        c0[mc] += v0 * pr[mc];
        c1[mc] += v1 * pr[mc];
        c2[mc] += v2 * pr[mc];
        c3[mc] += v3 * pr[mc];
      }
    }
  }
  for (; co < co_n; ++co) {
    T* __restrict c0 = C + co * ldc + m0;
    const T* a0 = A + co * K;
    for (int64_t k = 0; k < K; ++k) {
      const T* __restrict pr = P + k * mt;
      const T v0 = a0[k];
      for (int64_t mc = 0; mc < mt; ++mc) c0[mc] += v0 * pr[mc];
    }
  }
}

template <typename T>
void conv2d_forward_kernel(const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b, Tensor<T>& out, int64_t stride,
                           Pad2 pb) {
  const ConvGeom geom{x.shape(), w.shape(), out.shape(), stride, pb};
  const Shape os = geom.os;
  const int64_t K = geom.patch_len();
  const int64_t M = geom.cols();
  const int64_t mt_max = geom.tile_cols();

  T* od = out.data();
  for (int64_t n = 0; n < os.n; ++n) {
    for (int64_t co = 0; co < os.c; ++co) {
      const T bias_v = b.defined() ? b.data()[co] : T(0);
      T* orow = od + (n * os.c + co) * M;
      for (int64_t m = 0; m < M; ++m) orow[m] = bias_v;
    }
  }

  std::vector<T> patch(static_cast<std::size_t>(K * mt_max));
  for (int64_t n = 0; n < os.n; ++n) {
    for (int64_t m0 = 0; m0 < M; m0 += mt_max) {
      const int64_t mt = std::min(mt_max, M - m0);
      im2col_tile(x.data(), geom, n, m0, mt, patch.data());
      gemm_rows(w.data(), patch.data(), od + n * os.c * M, os.c, K, mt, M, m0);
    }
  }
}

template <typename T>
void conv2d_backward_kernel(const Tensor<T>& x, const Tensor<T>& w,
                            const Tensor<T>& b, const Tensor<T>& out,
                            int64_t stride, Pad2 pb) {
  const ConvGeom geom{x.shape(), w.shape(), out.shape(), stride, pb};
  const Shape os = geom.os;
  const int64_t K = geom.patch_len();
  const int64_t M = geom.cols();
  const int64_t mt_max = geom.tile_cols();
  const T* go = out.grad_data();

  if (b.defined() && b.requires_grad()) {
    T* gb = const_cast<Tensor<T>&>(b).grad_data();
    for (int64_t n = 0; n < os.n; ++n) {
      for (int64_t co = 0; co < os.c; ++co) {
        T acc = T(0);
        const T* __restrict g = go + (n * os.c + co) * M;
#pragma omp simd reduction(+ : acc)
        for (int64_t i = 0; i < M; ++i) acc += g[i];
        gb[co] += acc;
      }
    }
  }

  const bool need_w = w.requires_grad();
  const bool need_x = x.requires_grad();
  if (!need_w && !need_x) return;

  std::vector<T> patch(need_w ? static_cast<std::size_t>(K * mt_max) : 0);
  std::vector<T> patch_t(need_w ? static_cast<std::size_t>(K * mt_max) : 0);
  std::vector<T> gpatch(need_x ? static_cast<std::size_t>(K * mt_max) : 0);
  T* gw = need_w ? const_cast<Tensor<T>&>(w).grad_data() : nullptr;
  T* gx = need_x ? const_cast<Tensor<T>&>(x).grad_data() : nullptr;

  for (int64_t n = 0; n < os.n; ++n) {
    const T* gplane = go + n * os.c * M;
    for (int64_t m0 = 0; m0 < M; m0 += mt_max) {
      const int64_t mt = std::min(mt_max, M - m0);

      if (need_w) {
        im2col_tile(x.data(), geom, n, m0, mt, patch.data());
        // Transposed copy so the dW update is a contiguous K-long axpy.
        for (int64_t k = 0; k < K; ++k) {
          const T* src = patch.data() + k * mt;
          T* dst = patch_t.data() + k;
          for (int64_t mc = 0; mc < mt; ++mc) dst[mc * K] = src[mc];
        }
        for (int64_t co = 0; co < os.c; ++co) {
          const T* grow = gplane + co * M + m0;
          T* __restrict dw = gw + co * K;
          for (int64_t mc = 0; mc < mt; ++mc) {
            const T gv = grow[mc];
            const T* __restrict pr = patch_t.data() + mc * K;
            for (int64_t k = 0; k < K; ++k) dw[k] += gv * pr[k];
          }
        }
      }

      if (need_x) {
        // gpatch = W^T . gout, then scatter back through col2im.
        for (int64_t k = 0; k < K; ++k) {
          T* __restrict dst = gpatch.data() + k * mt;
          for (int64_t mc = 0; mc < mt; ++mc) dst[mc] = T(0);
          for (int64_t co = 0; co < os.c; ++co) {
            const T wv = w.data()[co * K + k];
            const T* __restrict grow = gplane + co * M + m0;
            for (int64_t mc = 0; mc < mt; ++mc) dst[mc] += wv * grow[mc];
          }
        }
        col2im_tile(gx, geom, n, m0, mt, gpatch.data());
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Graph<T>* g, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, Pad2 pad_begin, Pad2 pad_end) {
  if (!input.defined() || !weight.defined()) {
    throw UsageError("conv2d: undefined input or weight");
  }
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (pad_begin.h < 0 || pad_begin.w < 0 || pad_end.h < 0 || pad_end.w < 0) {
    throw ConfigError("conv2d: negative padding");
  }
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) +
                     " input channels, input " + xs.str() + " has " +
                     std::to_string(xs.c));
  }
  check_bias(bias, ws.n, "conv2d");

  const int64_t span_h = xs.h + pad_begin.h + pad_end.h - ws.h;
  const int64_t span_w = xs.w + pad_begin.w + pad_end.w - ws.w;
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0) {
    throw ConfigError("conv2d: output size (" + std::to_string(span_h) + "," +
                      std::to_string(span_w) + ")/" + std::to_string(stride) +
                      " + 1 is not an exact positive integer for input " +
                      xs.str() + ", kernel " + ws.str());
  }
  const Shape os{xs.n, ws.n, span_h / stride + 1, span_w / stride + 1};

  Tensor<T> out = Tensor<T>::zeros(os);
  conv2d_forward_kernel(input, weight, bias, out, stride, pad_begin);

  if (wants_grad(g, {&input, &weight, &bias})) {
    out.set_requires_grad(true);
    Tensor<T> x = input, w = weight, b = bias, o = out;
    const int64_t s = stride;
    const Pad2 pb = pad_begin;
    g->record({out}, [x, w, b, o, s, pb]() {
      conv2d_backward_kernel(x, w, b, o, s, pb);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv_transpose2d

namespace {

// Zero-insertion upsampling of every plane: x[i] lands at position i*rate.
template <typename T>
Tensor<T> zero_insert(const Tensor<T>& x, int64_t rate, bool requires_grad) {
  const Shape xs = x.shape();
  const Shape zs{xs.n, xs.c, (xs.h - 1) * rate + 1, (xs.w - 1) * rate + 1};
  Tensor<T> z = Tensor<T>::zeros(zs, requires_grad);
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t c = 0; c < xs.c; ++c) {
      const T* xp = x.data() + (n * xs.c + c) * xs.h * xs.w;
      T* zp = z.data() + (n * zs.c + c) * zs.h * zs.w;
      for (int64_t y = 0; y < xs.h; ++y) {
        T* zrow = zp + y * rate * zs.w;
        const T* xrow = xp + y * xs.w;
        for (int64_t v = 0; v < xs.w; ++v) zrow[v * rate] = xrow[v];
      }
    }
  }
  return z;
}

// (c_in, c_out, kh, kw) -> (c_out, c_in, KH-1-kh, KW-1-kw): the kernel
// that makes the transposed convolution a stride-1 cross-correlation of
// the zero-inserted input.
template <typename T>
Tensor<T> flip_transpose_weight(const Tensor<T>& w, bool requires_grad) {
  const Shape ws = w.shape();
  Tensor<T> wt = Tensor<T>::zeros(Shape{ws.c, ws.n, ws.h, ws.w}, requires_grad);
  for (int64_t ci = 0; ci < ws.n; ++ci) {
    for (int64_t co = 0; co < ws.c; ++co) {
      for (int64_t kh = 0; kh < ws.h; ++kh) {
        for (int64_t kw = 0; kw < ws.w; ++kw) {
          wt.at(co, ci, ws.h - 1 - kh, ws.w - 1 - kw) = w.at(ci, co, kh, kw);
        }
      }
    }
  }
  return wt;
}

}  // namespace

template <typename T>
Tensor<T> conv_transpose2d(Graph<T>* g, const Tensor<T>& input,
                           const Tensor<T>& weight, const Tensor<T>& bias,
                           int up_rate, int pad) {
  if (!input.defined() || !weight.defined()) {
    throw UsageError("conv_transpose2d: undefined input or weight");
  }
  const Shape xs = input.shape();
  const Shape ws = weight.shape();  // (c_in, c_out, kh, kw)
  if (up_rate < 1) throw ConfigError("conv_transpose2d: up_rate must be >= 1");
  if (pad < 0) throw ConfigError("conv_transpose2d: negative padding");
  if (ws.n != xs.c) {
    throw ShapeError("conv_transpose2d: weight expects " + std::to_string(ws.n) +
                     " input channels, input " + xs.str() + " has " +
                     std::to_string(xs.c));
  }
  check_bias(bias, ws.c, "conv_transpose2d");

  const int64_t oh = (xs.h - 1) * up_rate - 2 * pad + ws.h;
  const int64_t ow = (xs.w - 1) * up_rate - 2 * pad + ws.w;
  if (xs.h < 1 || xs.w < 1 || oh < 1 || ow < 1) {
    throw ConfigError("conv_transpose2d: output size " + std::to_string(oh) +
                      "x" + std::to_string(ow) + " is not positive for input " +
                      xs.str());
  }
  if (ws.h - 1 - pad < 0 || ws.w - 1 - pad < 0) {
    throw ConfigError("conv_transpose2d: padding exceeds kernel extent");
  }

  const bool rec = wants_grad(g, {&input, &weight, &bias});
  Tensor<T> z = zero_insert(input, up_rate, rec && input.requires_grad());
  Tensor<T> wt = flip_transpose_weight(weight, rec && weight.requires_grad());
  const Pad2 full_pad{static_cast<int>(ws.h) - 1 - pad,
                      static_cast<int>(ws.w) - 1 - pad};

  Tensor<T> out = Tensor<T>::zeros(Shape{xs.n, ws.c, oh, ow});
  conv2d_forward_kernel(z, wt, bias, out, /*stride=*/1, full_pad);

  if (rec) {
    out.set_requires_grad(true);
    Tensor<T> x = input, w = weight, b = bias, o = out;
    const int64_t r = up_rate;
    g->record({out}, [x, w, b, o, z, wt, full_pad, r]() {
      conv2d_backward_kernel(z, wt, b, o, /*stride=*/1, full_pad);
      if (x.requires_grad()) {
        const Shape s = x.shape();
        const Shape zs = z.shape();
        T* gx = const_cast<Tensor<T>&>(x).grad_data();
        const T* gz = z.grad_data();
        for (int64_t n = 0; n < s.n; ++n) {
          for (int64_t c = 0; c < s.c; ++c) {
            T* gxp = gx + (n * s.c + c) * s.h * s.w;
            const T* gzp = gz + (n * zs.c + c) * zs.h * zs.w;
            for (int64_t y = 0; y < s.h; ++y) {
              for (int64_t v = 0; v < s.w; ++v) {
                gxp[y * s.w + v] += gzp[(y * r) * zs.w + v * r];
              }
            }
          }
        }
        const_cast<Tensor<T>&>(z).zero_grad();
      }
      if (w.requires_grad()) {
        const Shape ws2 = w.shape();
        T* gwp = const_cast<Tensor<T>&>(w).grad_data();
        const Tensor<T>& wtc = wt;
        for (int64_t ci = 0; ci < ws2.n; ++ci) {
          for (int64_t co = 0; co < ws2.c; ++co) {
            for (int64_t kh = 0; kh < ws2.h; ++kh) {
              for (int64_t kw = 0; kw < ws2.w; ++kw) {
                gwp[((ci * ws2.c + co) * ws2.h + kh) * ws2.w + kw] +=
                    wtc.grad_data()[((co * ws2.n + ci) * ws2.h + (ws2.h - 1 - kh)) *
                                        ws2.w +
                                    (ws2.w - 1 - kw)];
              }
            }
          }
        }
        const_cast<Tensor<T>&>(wt).zero_grad();
      }
    });
  }
  return out;
}
// ---------------------------------------------------------------------------
// batch_norm

template <typename T>
Tensor<T> batch_norm(Graph<T>* g, const Tensor<T>& input, const Tensor<T>& gamma,
                     const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool training, T epsilon,
                     T momentum) {
  if (!input.defined()) throw UsageError("batch_norm: undefined input");
  const Shape xs = input.shape();
  const int64_t per_channel = xs.n * xs.h * xs.w;
  if (per_channel == 0) {
    throw UsageError("batch_norm: zero batch*spatial extent in " + xs.str());
  }
  if (gamma.numel() != xs.c || beta.numel() != xs.c ||
      running_mean.numel() != xs.c || running_var.numel() != xs.c) {
    throw ShapeError("batch_norm: per-channel arrays do not match " +
                     std::to_string(xs.c) + " channels");
  }

  const int64_t plane = xs.h * xs.w;
  std::vector<T> mean(static_cast<std::size_t>(xs.c));
  std::vector<T> invstd(static_cast<std::size_t>(xs.c));

  if (training) {
    for (int64_t c = 0; c < xs.c; ++c) {
      double sum = 0.0;
      for (int64_t n = 0; n < xs.n; ++n) {
        const T* p = input.data() + (n * xs.c + c) * plane;
        for (int64_t i = 0; i < plane; ++i) sum += static_cast<double>(p[i]);
      }
      const double mu = sum / static_cast<double>(per_channel);
      double ss = 0.0;
      for (int64_t n = 0; n < xs.n; ++n) {
        const T* p = input.data() + (n * xs.c + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(per_channel);
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(epsilon)));
      running_mean.values()[c] =
          (T(1) - momentum) * running_mean.values()[c] + momentum * static_cast<T>(mu);
      running_var.values()[c] =
          (T(1) - momentum) * running_var.values()[c] + momentum * static_cast<T>(var);
    }
  } else {
    for (int64_t c = 0; c < xs.c; ++c) {
      mean[c] = running_mean.values()[c];
      invstd[c] = T(1) / std::sqrt(running_var.values()[c] + epsilon);
    }
  }

  Tensor<T> out = Tensor<T>::zeros(xs);
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t c = 0; c < xs.c; ++c) {
      const T* p = input.data() + (n * xs.c + c) * plane;
      T* o = out.data() + (n * xs.c + c) * plane;
      const T m = mean[c], is = invstd[c];
      const T gm = gamma.values()[c], bt = beta.values()[c];
      for (int64_t i = 0; i < plane; ++i) o[i] = gm * ((p[i] - m) * is) + bt;
    }
  }

  if (wants_grad(g, {&input, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor<T> x = input, gm = gamma, bt = beta, o = out;
    g->record({out}, [x, gm, bt, o, mean, invstd, training]() {
      const Shape s = x.shape();
      const int64_t plane_b = s.h * s.w;
      const int64_t count = s.n * plane_b;
      const T* go = o.grad_data();
      for (int64_t c = 0; c < s.c; ++c) {
        const T m = mean[c], is = invstd[c];
        const T gmv = gm.values()[c];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int64_t n = 0; n < s.n; ++n) {
          const T* gp = go + (n * s.c + c) * plane_b;
          const T* xp = x.data() + (n * s.c + c) * plane_b;
          for (int64_t i = 0; i < plane_b; ++i) {
            const T xhat = (xp[i] - m) * is;
            sum_g += static_cast<double>(gp[i]);
            sum_gx += static_cast<double>(gp[i]) * static_cast<double>(xhat);
          }
        }
        if (gm.requires_grad()) {
          const_cast<Tensor<T>&>(gm).grad()[c] += static_cast<T>(sum_gx);
        }
        if (bt.requires_grad()) {
          const_cast<Tensor<T>&>(bt).grad()[c] += static_cast<T>(sum_g);
        }
        if (x.requires_grad()) {
          T* gx = const_cast<Tensor<T>&>(x).grad_data();
          if (training) {
            const T mg = static_cast<T>(sum_g / static_cast<double>(count));
            const T mgx = static_cast<T>(sum_gx / static_cast<double>(count));
            for (int64_t n = 0; n < s.n; ++n) {
              const T* gp = go + (n * s.c + c) * plane_b;
              const T* xp = x.data() + (n * s.c + c) * plane_b;
              T* gxp = gx + (n * s.c + c) * plane_b;
              for (int64_t i = 0; i < plane_b; ++i) {
                const T xhat = (xp[i] - m) * is;
                gxp[i] += gmv * is * (gp[i] - mg - xhat * mgx);
              }
            }
          } else {
            for (int64_t n = 0; n < s.n; ++n) {
              const T* gp = go + (n * s.c + c) * plane_b;
              T* gxp = gx + (n * s.c + c) * plane_b;
              for (int64_t i = 0; i < plane_b; ++i) gxp[i] += gmv * is * gp[i];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// relu

template <typename T>
Tensor<T> relu(Graph<T>* g, const Tensor<T>& input) {
  if (!input.defined()) throw UsageError("relu: undefined input");
  Tensor<T> out = Tensor<T>::zeros(input.shape());
  const T* p = input.data();
  T* o = out.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) o[i] = p[i] > T(0) ? p[i] : T(0);

  if (wants_grad(g, {&input})) {
    out.set_requires_grad(true);
    Tensor<T> x = input, ot = out;
    g->record({out}, [x, ot]() {
      if (!x.requires_grad()) return;
      T* gx = const_cast<Tensor<T>&>(x).grad_data();
      const T* go = ot.grad_data();
      const T* xd = x.data();
      const int64_t m = x.numel();
      for (int64_t i = 0; i < m; ++i) {
        if (xd[i] > T(0)) gx[i] += go[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// concat_channels

template <typename T>
Tensor<T> concat_channels(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.defined() || !b.defined()) throw UsageError("concat_channels: undefined input");
  const Shape as = a.shape(), bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw ShapeError("concat_channels: " + as.str() + " vs " + bs.str() +
                     " differ outside the channel axis");
  }
  const Shape os{as.n, as.c + bs.c, as.h, as.w};
  Tensor<T> out = Tensor<T>::zeros(os);
  const int64_t plane = as.h * as.w;
  for (int64_t n = 0; n < os.n; ++n) {
    std::copy(a.data() + n * as.c * plane, a.data() + (n + 1) * as.c * plane,
              out.data() + n * os.c * plane);
    std::copy(b.data() + n * bs.c * plane, b.data() + (n + 1) * bs.c * plane,
              out.data() + n * os.c * plane + as.c * plane);
  }

  if (wants_grad(g, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor<T> ta = a, tb = b, o = out;
    g->record({out}, [ta, tb, o]() {
      const Shape sa = ta.shape(), sb = tb.shape(), so = o.shape();
      const int64_t pl = sa.h * sa.w;
      const T* go = o.grad_data();
      for (int64_t n = 0; n < so.n; ++n) {
        if (ta.requires_grad()) {
          T* ga = const_cast<Tensor<T>&>(ta).grad_data() + n * sa.c * pl;
          const T* src = go + n * so.c * pl;
          for (int64_t i = 0; i < sa.c * pl; ++i) ga[i] += src[i];
        }
        if (tb.requires_grad()) {
          T* gb = const_cast<Tensor<T>&>(tb).grad_data() + n * sb.c * pl;
          const T* src = go + n * so.c * pl + sa.c * pl;
          for (int64_t i = 0; i < sb.c * pl; ++i) gb[i] += src[i];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// l1_loss

template <typename T>
Tensor<T> l1_loss(Graph<T>* g, const Tensor<T>& pred, const Tensor<T>& target) {
  if (!pred.defined() || !target.defined()) throw UsageError("l1_loss: undefined input");
  if (!(pred.shape() == target.shape())) {
    throw ShapeError("l1_loss: shape mismatch " + pred.shape().str() + " vs " +
                     target.shape().str());
  }
  const int64_t n = pred.numel();
  if (n == 0) throw UsageError("l1_loss: empty tensors");
  double acc = 0.0;
  const T* p = pred.data();
  const T* t = target.data();
  for (int64_t i = 0; i < n; ++i) {
    acc += std::abs(static_cast<double>(p[i]) - static_cast<double>(t[i]));
  }
  Tensor<T> out = Tensor<T>::from_data(
      Shape{1, 1, 1, 1}, {static_cast<T>(acc / static_cast<double>(n))});

  if (wants_grad(g, {&pred, &target})) {
    out.set_requires_grad(true);
    Tensor<T> tp = pred, tt = target, o = out;
    g->record({out}, [tp, tt, o]() {
      const int64_t m = tp.numel();
      const T scale = o.grad()[0] / static_cast<T>(m);
      const T* pp = tp.data();
      const T* pt = tt.data();
      for (int64_t i = 0; i < m; ++i) {
        const T d = pp[i] - pt[i];
        const T s = d > T(0) ? scale : (d < T(0) ? -scale : T(0));
        if (tp.requires_grad()) const_cast<Tensor<T>&>(tp).grad_data()[i] += s;
        if (tt.requires_grad()) const_cast<Tensor<T>&>(tt).grad_data()[i] -= s;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// sum_all

template <typename T>
Tensor<T> sum_all(Graph<T>* g, const Tensor<T>& input) {
  if (!input.defined()) throw UsageError("sum_all: undefined input");
  double acc = 0.0;
  const T* p = input.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(p[i]);
  Tensor<T> out = Tensor<T>::from_data(Shape{1, 1, 1, 1}, {static_cast<T>(acc)});

  if (wants_grad(g, {&input})) {
    out.set_requires_grad(true);
    Tensor<T> x = input, o = out;
    g->record({out}, [x, o]() {
      if (!x.requires_grad()) return;
      const T gv = o.grad()[0];
      T* gx = const_cast<Tensor<T>&>(x).grad_data();
      const int64_t m = x.numel();
      for (int64_t i = 0; i < m; ++i) gx[i] += gv;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// broadcast_spatial

template <typename T>
Tensor<T> broadcast_spatial(Graph<T>* g, const Tensor<T>& input, int h, int w) {
  if (!input.defined()) throw UsageError("broadcast_spatial: undefined input");
  const Shape xs = input.shape();
  if (xs.h != 1 || xs.w != 1) {
    throw ShapeError("broadcast_spatial: input " + xs.str() + " is not (n,c,1,1)");
  }
  if (h < 1 || w < 1) throw ConfigError("broadcast_spatial: non-positive target size");
  const Shape os{xs.n, xs.c, h, w};
  Tensor<T> out = Tensor<T>::zeros(os);
  const int64_t plane = os.h * os.w;
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t c = 0; c < xs.c; ++c) {
      const T v = input.data()[n * xs.c + c];
      T* o = out.data() + (n * os.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) o[i] = v;
    }
  }

  if (wants_grad(g, {&input})) {
    out.set_requires_grad(true);
    Tensor<T> x = input, o = out;
    g->record({out}, [x, o]() {
      if (!x.requires_grad()) return;
      const Shape s = o.shape();
      const int64_t pl = s.h * s.w;
      const T* go = o.grad_data();
      T* gx = const_cast<Tensor<T>&>(x).grad_data();
      for (int64_t n = 0; n < s.n; ++n) {
        for (int64_t c = 0; c < s.c; ++c) {
          T acc = T(0);
          const T* p = go + (n * s.c + c) * pl;
          for (int64_t i = 0; i < pl; ++i) acc += p[i];
          gx[n * s.c + c] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

#define CBFN_INSTANTIATE_OPS(T)                                                   \
  template Tensor<T> conv2d<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&,     \
                               const Tensor<T>&, int, Pad2, Pad2);                \
  template Tensor<T> conv_transpose2d<T>(Graph<T>*, const Tensor<T>&,             \
                                         const Tensor<T>&, const Tensor<T>&, int, \
                                         int);                                    \
  template Tensor<T> batch_norm<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&, \
                                   const Tensor<T>&, Tensor<T>&, Tensor<T>&, bool, \
                                   T, T);                                         \
  template Tensor<T> relu<T>(Graph<T>*, const Tensor<T>&);                        \
  template Tensor<T> concat_channels<T>(Graph<T>*, const Tensor<T>&,              \
                                        const Tensor<T>&);                        \
  template Tensor<T> l1_loss<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> sum_all<T>(Graph<T>*, const Tensor<T>&);                     \
  template Tensor<T> broadcast_spatial<T>(Graph<T>*, const Tensor<T>&, int, int);

CBFN_INSTANTIATE_OPS(float)
CBFN_INSTANTIATE_OPS(double)

#undef CBFN_INSTANTIATE_OPS

}  // namespace cbfn
