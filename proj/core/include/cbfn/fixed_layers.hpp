#pragma once

#include <string>
#include <vector>

#include "cbfn/graph.hpp"
#include "cbfn/ops.hpp"
#include "cbfn/tensor.hpp"

namespace cbfn {

enum class KernelNorm {
  unit,  // every rate-strided polyphase component of the kernel sums to 1
  mean,  // all taps sum to 1
};

// The smoothing kernel applied by the non-trainable convolution stages of
// the sampling blocks: the rate x rate zero-order hold self-convolved
// `order` extra times, scaled per the normalization policy. Immutable
// once built.
template <typename T>
struct FixedKernel {
  int rate = 2;
  int order = 0;
  int side = 2;  // (order+1)*(rate-1) + 1
  KernelNorm norm = KernelNorm::unit;
  std::vector<T> taps;  // side*side, row-major

  T tap(int r, int c) const { return taps[static_cast<std::size_t>(r) * side + c]; }
};

// rate x rate matrix of raw ones (the zero-order hold).
std::vector<double> zoh_kernel(int rate);

// Unnormalized kernel of the recursion: order 0 is the zero-order hold,
// order d is the (d-1) kernel convolved (full 2-D) with the hold once more.
std::vector<double> fixed_kernel_raw(int rate, int order);

int fixed_kernel_side(int rate, int order);

template <typename T>
FixedKernel<T> make_fixed_kernel(int rate, int order, KernelNorm norm);

// One line per row, entries separated by single spaces, 9 significant digits.
std::string format_kernel(const std::vector<double>& taps, int side);

// Depthwise convolution of every channel with the fixed kernel plus a
// per-channel trainable bias. Spatial size is preserved by asymmetric
// zero padding (side/2 before, (side-1)/2 after on both axes). The kernel
// never receives a gradient; input and bias do.
template <typename T>
Tensor<T> fixed_conv(Graph<T>* g, const Tensor<T>& input,
                     const FixedKernel<T>& kernel, const Tensor<T>& bias);

// Upsampling block: 4x4 transposed convolution with stride 1/2 and
// padding 1, then the fixed smoothing convolution. Doubles both spatial
// dimensions. weight (c_in, c_out, 4, 4); fixed_bias (1, c_out, 1, 1).
template <typename T>
Tensor<T> fixed_up(Graph<T>* g, const Tensor<T>& input, const Tensor<T>& weight,
                   const Tensor<T>& bias, const FixedKernel<T>& kernel,
                   const Tensor<T>& fixed_bias);

// Downsampling block: the fixed smoothing convolution, then a 3x3
// convolution with stride 2 (padding 1 before, 0 after). Halves both
// spatial dimensions; input extents must be even. weight (c_out, c_in, 3, 3).
template <typename T>
Tensor<T> fixed_down(Graph<T>* g, const Tensor<T>& input,
                     const FixedKernel<T>& kernel, const Tensor<T>& fixed_bias,
                     const Tensor<T>& weight, const Tensor<T>& bias);

}  // namespace cbfn
