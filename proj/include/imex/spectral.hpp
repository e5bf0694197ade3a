#pragma once

#include <complex>
#include <vector>

#include "imex/tensor.hpp"

// Circulant embedding of group kernels and the FFT-based implicit solve:
// (I + h * B^T B)^-1 applied per channel under periodic boundary conditions.

namespace imex {

/// A group kernel zero-embedded into image size with the center tap at
/// (0, 0) and the remaining taps wrapped into the plane corners.
template <class T>
struct KernelPlane {
  int c = 0, h = 0, w = 0;
  std::vector<T> v;

  KernelPlane() = default;
  KernelPlane(int c_, int h_, int w_) : c(c_), h(h_), w(w_) {
    v.assign(static_cast<size_t>(c_) * h_ * w_, T(0));
  }
  T* channel(int ci) { return v.data() + static_cast<size_t>(ci) * h * w; }
  const T* channel(int ci) const { return v.data() + static_cast<size_t>(ci) * h * w; }
};

/// Per-channel discrete Fourier transform of a KernelPlane: the spectral
/// multiplier of the corresponding circulant operator.
template <class T>
struct Symbol {
  int c = 0, h = 0, w = 0;
  std::vector<std::complex<T>> v;

  Symbol() = default;
  Symbol(int c_, int h_, int w_) : c(c_), h(h_), w(w_) {
    v.assign(static_cast<size_t>(c_) * h_ * w_, std::complex<T>(0));
  }
  std::complex<T>* channel(int ci) { return v.data() + static_cast<size_t>(ci) * h * w; }
  const std::complex<T>* channel(int ci) const {
    return v.data() + static_cast<size_t>(ci) * h * w;
  }
};

template <class T>
KernelPlane<T> embed_kernel(const GroupKernel<T>& k, int h, int w);

/// Adjoint of embed_kernel: gather the corner entries back into kernel taps.
template <class T>
GroupKernel<T> gather_kernel(const KernelPlane<T>& p, int kh, int kw);

template <class T>
Symbol<T> symbol(const KernelPlane<T>& p);

/// Per-channel real spectral multiplier t = 1 / (1 + h * |symbol(B)|^2),
/// laid out like a KernelPlane (c, h, w).
template <class T>
std::vector<T> group_multiplier(const GroupKernel<T>& b, T h, int height, int width);

/// Applies a per-channel real spectral multiplier to every sample.
template <class T>
Tensor4<T> apply_spectral_multiplier(const Tensor4<T>& x, const std::vector<T>& t);

/// Solves (I + h * B^T B) y = x per channel through the Fourier transform.
template <class T>
Tensor4<T> solve_group_implicit(const Tensor4<T>& x, const GroupKernel<T>& b, T h);

/// Spatial-domain partner of the solve: x + h * B^T (B x).
template <class T>
Tensor4<T> apply_identity_plus_hL(const Tensor4<T>& x, const GroupKernel<T>& b, T h);

/// Solves (I + h L) y = x for a directly supplied centro-symmetric PSD
/// stencil L (the fixed-Laplacian demo mode).
template <class T>
Tensor4<T> solve_direct_symmetric(const Tensor4<T>& x, const GroupKernel<T>& lk, T h);

/// The 3x3 discrete Laplace stencil (1/6) [[-1,-4,-1],[-4,20,-4],[-1,-4,-1]],
/// replicated over c channels.
template <class T>
GroupKernel<T> laplacian_kernel(int c);

/// Default implicit kernel: (1/sqrt(6)) [[0,-1,0],[-1,4,-1],[0,-1,0]] per
/// channel; its B^T B is positive semidefinite and Laplacian-like.
template <class T>
GroupKernel<T> laplacian_factor_kernel(int c);

}  // namespace imex
