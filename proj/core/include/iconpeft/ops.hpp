#pragma once

#include <span>
#include <vector>

#include "iconpeft/tensor.hpp"

namespace iconpeft {

// Elementwise binary ops with NumPy-style right-aligned broadcasting.
template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);

// Multiply by a compile-side constant (no gradient for the constant).
template <class S>
Tensor<S> scale(const Tensor<S>& a, double c);

template <class S>
Tensor<S> gelu(const Tensor<S>& x);

// Last-axis softmax with max subtraction.
template <class S>
Tensor<S> softmax(const Tensor<S>& x);

// Per-last-axis standardization (population variance) then affine.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& weight,
                     const Tensor<S>& bias, double eps);

// Batched contraction over the last two axes; leading axes broadcast.
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape target);

template <class S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm);

// Mean over one axis (axis removed from the shape).
template <class S>
Tensor<S> mean_axis(const Tensor<S>& x, int axis);

template <class S>
Tensor<S> sum_all(const Tensor<S>& x);

template <class S>
Tensor<S> mean_all(const Tensor<S>& x);

}  // namespace iconpeft
