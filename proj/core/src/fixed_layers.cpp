#include "cbfn/fixed_layers.hpp"

#include <cmath>
#include <cstdio>

#include "cbfn/errors.hpp"

namespace cbfn {

using std::int64_t;

std::vector<double> zoh_kernel(int rate) {
  if (rate < 2) {
    throw ConfigError("zoh_kernel: rate must be >= 2, got " + std::to_string(rate));
  }
  return std::vector<double>(static_cast<std::size_t>(rate) * rate, 1.0);
}

int fixed_kernel_side(int rate, int order) {
  return (order + 1) * (rate - 1) + 1;
}

namespace {

// Full 2-D convolution of two square matrices.
std::vector<double> conv_full(const std::vector<double>& a, int na,
                              const std::vector<double>& b, int nb) {
  const int no = na + nb - 1;
  std::vector<double> out(static_cast<std::size_t>(no) * no, 0.0);
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < na; ++j) {
      const double av = a[static_cast<std::size_t>(i) * na + j];
      for (int k = 0; k < nb; ++k) {
        for (int l = 0; l < nb; ++l) {
          out[static_cast<std::size_t>(i + k) * no + (j + l)] +=
              av * b[static_cast<std::size_t>(k) * nb + l];
        }
      }
    }
  }
  return out;
}

}  // namespace

std::vector<double> fixed_kernel_raw(int rate, int order) {
  if (order < 0) {
    throw ConfigError("fixed_kernel_raw: order must be >= 0, got " +
                      std::to_string(order));
  }
  std::vector<double> k = zoh_kernel(rate);
  int side = rate;
  const std::vector<double> hold = zoh_kernel(rate);
  for (int d = 0; d < order; ++d) {
    k = conv_full(k, side, hold, rate);
    side += rate - 1;
  }
  return k;
}

template <typename T>
FixedKernel<T> make_fixed_kernel(int rate, int order, KernelNorm norm) {
  const std::vector<double> raw = fixed_kernel_raw(rate, order);
  const int side = fixed_kernel_side(rate, order);

  double scale = 1.0;
  if (norm == KernelNorm::unit) {
    // Raw polyphase sums are all rate^(2*order); dividing by that makes
    // each polyphase component sum to 1 (for order 0 the taps stay 1).
    scale = 1.0 / std::pow(static_cast<double>(rate), 2.0 * order);
  } else {
    double total = 0.0;
    for (double v : raw) total += v;
    scale = 1.0 / total;
  }

  FixedKernel<T> k;
  k.rate = rate;
  k.order = order;
  k.side = side;
  k.norm = norm;
  k.taps.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    k.taps[i] = static_cast<T>(raw[i] * scale);
  }
  return k;
}

std::string format_kernel(const std::vector<double>& taps, int side) {
  std::string out;
  char buf[64];
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", taps[static_cast<std::size_t>(r) * side + c]);
      out += buf;
      out += (c + 1 == side) ? '\n' : ' ';
    }
  }
  return out;
}

namespace {

template <typename T>
void depthwise_forward(const Tensor<T>& x, const FixedKernel<T>& k,
                       const Tensor<T>& bias, Tensor<T>& out, int pb) {
  const Shape xs = x.shape();
  const T* xd = x.data();
  T* od = out.data();
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t c = 0; c < xs.c; ++c) {
      const T* xp = xd + (n * xs.c + c) * xs.h * xs.w;
      T* op = od + (n * xs.c + c) * xs.h * xs.w;
      const T bv = bias.defined() ? bias.data()[c] : T(0);
      for (int64_t oh = 0; oh < xs.h; ++oh) {
        T* orow = op + oh * xs.w;
        for (int64_t ow = 0; ow < xs.w; ++ow) orow[ow] = bv;
        for (int kh = 0; kh < k.side; ++kh) {
          const int64_t ih = oh - pb + kh;
          if (ih < 0 || ih >= xs.h) continue;
          const T* xrow = xp + ih * xs.w;
          for (int kw = 0; kw < k.side; ++kw) {
            const T wv = k.tap(kh, kw);
            const int64_t lo = std::max<int64_t>(0, pb - kw);
            const int64_t hi = std::min<int64_t>(xs.w - 1, xs.w - 1 + pb - kw);
            const T* xoff = xrow - pb + kw;
            for (int64_t ow = lo; ow <= hi; ++ow) orow[ow] += wv * xoff[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void depthwise_backward(const Tensor<T>& x, const FixedKernel<T>& k,
                        const Tensor<T>& bias, const Tensor<T>& out, int pb) {
  const Shape xs = x.shape();
  const T* go = out.grad_data();

  if (bias.defined() && bias.requires_grad()) {
    T* gb = const_cast<Tensor<T>&>(bias).grad_data();
    for (int64_t n = 0; n < xs.n; ++n) {
      for (int64_t c = 0; c < xs.c; ++c) {
        T acc = T(0);
        const T* gp = go + (n * xs.c + c) * xs.h * xs.w;
        for (int64_t i = 0; i < xs.h * xs.w; ++i) acc += gp[i];
        gb[c] += acc;
      }
    }
  }

  if (x.requires_grad()) {
    T* gx = const_cast<Tensor<T>&>(x).grad_data();
    for (int64_t n = 0; n < xs.n; ++n) {
      for (int64_t c = 0; c < xs.c; ++c) {
        const T* gp = go + (n * xs.c + c) * xs.h * xs.w;
        T* gxp = gx + (n * xs.c + c) * xs.h * xs.w;
        for (int64_t oh = 0; oh < xs.h; ++oh) {
          const T* grow = gp + oh * xs.w;
          for (int kh = 0; kh < k.side; ++kh) {
            const int64_t ih = oh - pb + kh;
            if (ih < 0 || ih >= xs.h) continue;
            T* gxrow = gxp + ih * xs.w;
            for (int kw = 0; kw < k.side; ++kw) {
              const T wv = k.tap(kh, kw);
              const int64_t lo = std::max<int64_t>(0, pb - kw);
              const int64_t hi = std::min<int64_t>(xs.w - 1, xs.w - 1 + pb - kw);
              T* gxoff = gxrow - pb + kw;
              for (int64_t ow = lo; ow <= hi; ++ow) gxoff[ow] += wv * grow[ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> fixed_conv(Graph<T>* g, const Tensor<T>& input,
                     const FixedKernel<T>& kernel, const Tensor<T>& bias) {
  if (!input.defined()) throw UsageError("fixed_conv: undefined input");
  const Shape xs = input.shape();
  if (bias.defined() && bias.numel() != xs.c) {
    throw ShapeError("fixed_conv: bias has " + std::to_string(bias.numel()) +
                     " entries for " + std::to_string(xs.c) + " channels");
  }
  const int pb = kernel.side / 2;  // pad_end = (side-1)/2 keeps size

  Tensor<T> out = Tensor<T>::zeros(xs);
  depthwise_forward(input, kernel, bias, out, pb);

  const bool rec = g != nullptr && (input.requires_grad() ||
                                    (bias.defined() && bias.requires_grad()));
  if (rec) {
    out.set_requires_grad(true);
    Tensor<T> x = input, b = bias, o = out;
    FixedKernel<T> k = kernel;
    g->record({out}, [x, k, b, o, pb]() { depthwise_backward(x, k, b, o, pb); });
  }
  return out;
}

template <typename T>
Tensor<T> fixed_up(Graph<T>* g, const Tensor<T>& input, const Tensor<T>& weight,
                   const Tensor<T>& bias, const FixedKernel<T>& kernel,
                   const Tensor<T>& fixed_bias) {
  if (kernel.rate != 2) {
    throw ConfigError("fixed_up: only rate 2 is supported in the sampling blocks");
  }
  const Shape ws = weight.shape();
  if (ws.h != 4 || ws.w != 4) {
    throw ConfigError("fixed_up: transposed-conv kernel must be 4x4, got " + ws.str());
  }
  Tensor<T> up = conv_transpose2d(g, input, weight, bias, /*up_rate=*/2, /*pad=*/1);
  return fixed_conv(g, up, kernel, fixed_bias);
}

template <typename T>
Tensor<T> fixed_down(Graph<T>* g, const Tensor<T>& input,
                     const FixedKernel<T>& kernel, const Tensor<T>& fixed_bias,
                     const Tensor<T>& weight, const Tensor<T>& bias) {
  if (kernel.rate != 2) {
    throw ConfigError("fixed_down: only rate 2 is supported in the sampling blocks");
  }
  const Shape xs = input.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    throw ConfigError("fixed_down: input spatial dims must be even, got " + xs.str());
  }
  const Shape ws = weight.shape();
  if (ws.h != 3 || ws.w != 3) {
    throw ConfigError("fixed_down: strided-conv kernel must be 3x3, got " + ws.str());
  }
  Tensor<T> smooth = fixed_conv(g, input, kernel, fixed_bias);
  return conv2d(g, smooth, weight, bias, /*stride=*/2, Pad2{1, 1}, Pad2{0, 0});
}

#define CBFN_INSTANTIATE_FIXED(T)                                               \
  template FixedKernel<T> make_fixed_kernel<T>(int, int, KernelNorm);           \
  template Tensor<T> fixed_conv<T>(Graph<T>*, const Tensor<T>&,                 \
                                   const FixedKernel<T>&, const Tensor<T>&);    \
  template Tensor<T> fixed_up<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&, \
                                 const Tensor<T>&, const FixedKernel<T>&,       \
                                 const Tensor<T>&);                             \
  template Tensor<T> fixed_down<T>(Graph<T>*, const Tensor<T>&,                 \
                                   const FixedKernel<T>&, const Tensor<T>&,     \
                                   const Tensor<T>&, const Tensor<T>&);

CBFN_INSTANTIATE_FIXED(float)
CBFN_INSTANTIATE_FIXED(double)

#undef CBFN_INSTANTIATE_FIXED

}  // namespace cbfn
