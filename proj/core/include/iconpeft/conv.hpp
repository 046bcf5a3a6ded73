#pragma once

#include "iconpeft/tensor.hpp"

namespace iconpeft {

// Per-sample channel-wise 2-D cross-correlation. Each (sample, channel) plane
// of x is convolved with its own K x K kernel, stride 1, zero "same" padding,
// so H x W is preserved. kernels: [B, C, K, K], x: [B, C, H, W].
template <class S>
Tensor<S> conv2d_depthwise_dynamic(const Tensor<S>& x, const Tensor<S>& kernels);

}  // namespace iconpeft
