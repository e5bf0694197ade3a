#pragma once

#include "imex/kernels.hpp"
#include "imex/tensor.hpp"

// Tensor-core operations: periodic convolutions, their adjoints and kernel
// gradients, instance normalization, and the element-wise primitives. All
// operations are pure; boundary handling is periodic everywhere.
//
// Convolution convention: true convolution with the kernel center aligned,
// out[p] = sum_m K[m + mid] * X[(p - m) mod (h, w)], so symmetric stencils
// are self-adjoint. The adjoint is correlation with transposed mixing.

namespace imex {

/// Execution strategy for the channel-mixing convolutions. The reference
/// path is plain nested loops; the gemm path lowers to im2col + BLAS.
/// Both satisfy the same contract and are equivalence-tested.
enum class ConvBackend { reference, gemm };

ConvBackend conv_backend();
void select_conv_backend(ConvBackend b);

template <class T>
Tensor4<T> conv2d_periodic(const Tensor4<T>& x, const ConvKernel<T>& k);

template <class T>
Tensor4<T> conv2d_adjoint_periodic(const Tensor4<T>& g, const ConvKernel<T>& k);

/// Gradient of sum(g * conv2d_periodic(x, K)) with respect to K.
template <class T>
ConvKernel<T> conv2d_kernel_grad(const Tensor4<T>& x, const Tensor4<T>& g, int kh, int kw);

template <class T>
Tensor4<T> group_conv2d_periodic(const Tensor4<T>& x, const GroupKernel<T>& b);

template <class T>
Tensor4<T> group_conv2d_adjoint_periodic(const Tensor4<T>& g, const GroupKernel<T>& b);

/// Gradient of sum(g * group_conv2d_periodic(x, B)) with respect to B.
template <class T>
GroupKernel<T> group_kernel_grad(const Tensor4<T>& x, const Tensor4<T>& g, int kh, int kw);

/// Per-sample, per-channel spatial standardization with learned affine.
template <class T>
Tensor4<T> instance_norm(const Tensor4<T>& x, const NormParams<T>& p);

/// Same, also returning the per-(sample, channel) mean and 1/sqrt(var+eps)
/// used, which the backward pass needs.
template <class T>
Tensor4<T> instance_norm_stats(const Tensor4<T>& x, const NormParams<T>& p,
                               std::vector<T>& mean_out, std::vector<T>& inv_out);

template <class T>
Tensor4<T> relu(const Tensor4<T>& x);

template <class T>
Tensor4<T> add(const Tensor4<T>& x, const Tensor4<T>& y);

template <class T>
Tensor4<T> sub(const Tensor4<T>& x, const Tensor4<T>& y);

template <class T>
Tensor4<T> scale(const Tensor4<T>& x, T s);

/// 1x1 channel-mixing convolution; a special case of conv2d_periodic.
template <class T>
Tensor4<T> conv1x1(const Tensor4<T>& x, const ConvKernel<T>& w);

/// Adds bias[c] to every element of channel c.
template <class T>
Tensor4<T> bias_add_channel(const Tensor4<T>& x, const std::vector<T>& bias);

template <class T>
double tensor_dot(const Tensor4<T>& x, const Tensor4<T>& y);

template <class T>
double tensor_norm2(const Tensor4<T>& x);

template <class T>
T tensor_max_abs(const Tensor4<T>& x);

}  // namespace imex
