#pragma once

#include "cbfn/graph.hpp"
#include "cbfn/shape.hpp"
#include "cbfn/tensor.hpp"

namespace cbfn {

// Forward ops. Each takes the graph to record onto; pass nullptr for a
// pure (inference) forward with no gradient tracking. Gradients are
// produced only for inputs that require them.

// Cross-correlation with zero padding. input (n, c_in, h, w), weight
// (c_out, c_in, kh, kw), bias (1, c_out, 1, 1) or undefined for none.
// The padded extent minus the kernel must divide the stride exactly;
// otherwise a ConfigError is raised.
template <typename T>
Tensor<T> conv2d(Graph<T>* g, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, Pad2 pad_begin, Pad2 pad_end);

// Adjoint of conv2d for matching stride/pad: zero-insertion upsampling by
// up_rate, full convolution with the kernel, then cropping pad from each
// border. weight (c_in, c_out, kh, kw).
template <typename T>
Tensor<T> conv_transpose2d(Graph<T>* g, const Tensor<T>& input,
                           const Tensor<T>& weight, const Tensor<T>& bias,
                           int up_rate, int pad);

// Per-channel normalization over (n, h, w). training=true uses batch
// statistics and folds them into the running buffers with the given
// momentum; training=false normalizes with the running buffers.
// gamma/beta/running buffers all have shape (1, c, 1, 1).
template <typename T>
Tensor<T> batch_norm(Graph<T>* g, const Tensor<T>& input, const Tensor<T>& gamma,
                     const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool training, T epsilon, T momentum);

// Elementwise max(0, x); the subgradient at 0 is 0.
template <typename T>
Tensor<T> relu(Graph<T>* g, const Tensor<T>& input);

// Concatenation along the channel axis; a's channels first.
template <typename T>
Tensor<T> concat_channels(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b);

// Mean absolute error over all elements, as a (1,1,1,1) scalar.
// d/dpred = sign(pred - target) / numel, with sign(0) = 0.
template <typename T>
Tensor<T> l1_loss(Graph<T>* g, const Tensor<T>& pred, const Tensor<T>& target);

// Sum of all elements, as a (1,1,1,1) scalar.
template <typename T>
Tensor<T> sum_all(Graph<T>* g, const Tensor<T>& input);

// Replicates a (n, c, 1, 1) descriptor over an (h, w) spatial grid.
template <typename T>
Tensor<T> broadcast_spatial(Graph<T>* g, const Tensor<T>& input, int h, int w);

}  // namespace cbfn
