#include "imex/spectral.hpp"

#include <cmath>

#include "imex/fft.hpp"
#include "imex/kernels.hpp"
#include "imex/ops.hpp"

namespace imex {

template <class T>
KernelPlane<T> embed_kernel(const GroupKernel<T>& k, int h, int w) {
  require_odd_kernel(k.kh, k.kw);
  require(k.kh <= h && k.kw <= w, "embed_kernel: kernel larger than plane");
  const int mid1 = (k.kh - 1) / 2, mid2 = (k.kw - 1) / 2;
  KernelPlane<T> p(k.c, h, w);
  for (int ci = 0; ci < k.c; ++ci) {
    T* plane = p.channel(ci);
    for (int ky = 0; ky < k.kh; ++ky) {
      const int py = ((ky - mid1) % h + h) % h;
      for (int kx = 0; kx < k.kw; ++kx) {
        const int px = ((kx - mid2) % w + w) % w;
        plane[static_cast<size_t>(py) * w + px] = k.at(ci, ky, kx);
      }
    }
  }
  return p;
}

template <class T>
GroupKernel<T> gather_kernel(const KernelPlane<T>& p, int kh, int kw) {
  require_odd_kernel(kh, kw);
  require(kh <= p.h && kw <= p.w, "gather_kernel: kernel larger than plane");
  const int mid1 = (kh - 1) / 2, mid2 = (kw - 1) / 2;
  GroupKernel<T> k(p.c, kh, kw);
  for (int ci = 0; ci < p.c; ++ci) {
    const T* plane = p.channel(ci);
    for (int ky = 0; ky < kh; ++ky) {
      const int py = ((ky - mid1) % p.h + p.h) % p.h;
      for (int kx = 0; kx < kw; ++kx) {
        const int px = ((kx - mid2) % p.w + p.w) % p.w;
        k.at(ci, ky, kx) = plane[static_cast<size_t>(py) * p.w + px];
      }
    }
  }
  return k;
}

template <class T>
Symbol<T> symbol(const KernelPlane<T>& p) {
  Symbol<T> s(p.c, p.h, p.w);
  for (int ci = 0; ci < p.c; ++ci) {
    const T* src = p.channel(ci);
    std::complex<T>* dst = s.channel(ci);
    for (size_t i = 0; i < static_cast<size_t>(p.h) * p.w; ++i) dst[i] = src[i];
    fft2d_forward(dst, p.h, p.w);
  }
  return s;
}

template <class T>
std::vector<T> group_multiplier(const GroupKernel<T>& b, T h, int height, int width) {
  if (h < T(0)) throw ValueError("group_multiplier: negative step size");
  const Symbol<T> s = symbol(embed_kernel(b, height, width));
  std::vector<T> t(static_cast<size_t>(b.c) * height * width);
  for (size_t i = 0; i < t.size(); ++i) {
    const T re = s.v[i].real(), im = s.v[i].imag();
    t[i] = T(1) / (T(1) + h * (re * re + im * im));
  }
  return t;
}

template <class T>
Tensor4<T> apply_spectral_multiplier(const Tensor4<T>& x, const std::vector<T>& t) {
  require(t.size() == static_cast<size_t>(x.c) * x.h * x.w,
          "apply_spectral_multiplier: multiplier shape mismatch");
  const auto& K = kern::table<T>();
  const size_t n = x.plane_size();
  Tensor4<T> out(x.b, x.c, x.h, x.w);
  std::vector<std::complex<T>> buf(n);
  for (int bi = 0; bi < x.b; ++bi)
    for (int ci = 0; ci < x.c; ++ci) {
      const T* src = x.plane(bi, ci);
      for (size_t i = 0; i < n; ++i) buf[i] = src[i];
      fft2d_forward(buf.data(), x.h, x.w);
      K.cmul_real(buf.data(), t.data() + static_cast<size_t>(ci) * n, n);
      fft2d_inverse(buf.data(), x.h, x.w);
      T* dst = out.plane(bi, ci);
      for (size_t i = 0; i < n; ++i) dst[i] = buf[i].real();
    }
  return out;
}

template <class T>
Tensor4<T> solve_group_implicit(const Tensor4<T>& x, const GroupKernel<T>& b, T h) {
  require(x.c == b.c, "solve_group_implicit: channel mismatch");
  if (h < T(0)) throw ValueError("solve_group_implicit: negative step size");
  if (h == T(0)) return x;
  bool all_zero = true;
  for (T v : b.v)
    if (v != T(0)) {
      all_zero = false;
      break;
    }
  if (all_zero) return x;  // multiplier is identically 1
  return apply_spectral_multiplier(x, group_multiplier(b, h, x.h, x.w));
}

template <class T>
Tensor4<T> apply_identity_plus_hL(const Tensor4<T>& x, const GroupKernel<T>& b, T h) {
  require(x.c == b.c, "apply_identity_plus_hL: channel mismatch");
  if (h < T(0)) throw ValueError("apply_identity_plus_hL: negative step size");
  if (h == T(0)) return x;
  Tensor4<T> ly = group_conv2d_adjoint_periodic(group_conv2d_periodic(x, b), b);
  const auto& K = kern::table<T>();
  K.scale(h, ly.data(), ly.data(), ly.size());
  K.add(x.data(), ly.data(), ly.data(), x.size());
  return ly;
}

template <class T>
Tensor4<T> solve_direct_symmetric(const Tensor4<T>& x, const GroupKernel<T>& lk, T h) {
  require(x.c == lk.c, "solve_direct_symmetric: channel mismatch");
  if (h < T(0)) throw ValueError("solve_direct_symmetric: negative step size");
  for (int ci = 0; ci < lk.c; ++ci)
    for (int ky = 0; ky < lk.kh; ++ky)
      for (int kx = 0; kx < lk.kw; ++kx)
        if (lk.at(ci, ky, kx) != lk.at(ci, lk.kh - 1 - ky, lk.kw - 1 - kx))
          throw ValueError("solve_direct_symmetric: stencil is not centro-symmetric");
  const Symbol<T> s = symbol(embed_kernel(lk, x.h, x.w));
  const size_t n = static_cast<size_t>(x.h) * x.w;
  std::vector<T> t(static_cast<size_t>(lk.c) * n);
  for (int ci = 0; ci < lk.c; ++ci) {
    const std::complex<T>* sc = s.channel(ci);
    double max_mag = 0.0, min_re = 0.0;
    for (size_t i = 0; i < n; ++i) {
      max_mag = std::max(max_mag, static_cast<double>(std::abs(sc[i])));
      min_re = std::min(min_re, static_cast<double>(sc[i].real()));
    }
    if (min_re < -1e-6 * max_mag)
      throw ValueError("solve_direct_symmetric: stencil symbol is not positive semidefinite");
    for (size_t i = 0; i < n; ++i) {
      const T re = std::max(sc[i].real(), T(0));
      t[static_cast<size_t>(ci) * n + i] = T(1) / (T(1) + h * re);
    }
  }
  if (h == T(0)) return x;
  return apply_spectral_multiplier(x, t);
}

template <class T>
GroupKernel<T> laplacian_kernel(int c) {
  GroupKernel<T> k(c, 3, 3);
  const T s = T(1) / T(6);
  const T vals[9] = {-1, -4, -1, -4, 20, -4, -1, -4, -1};
  for (int ci = 0; ci < c; ++ci)
    for (int i = 0; i < 9; ++i) k.channel(ci)[i] = vals[i] * s;
  return k;
}

template <class T>
GroupKernel<T> laplacian_factor_kernel(int c) {
  GroupKernel<T> k(c, 3, 3);
  const T s = T(1) / static_cast<T>(std::sqrt(6.0));
  const T vals[9] = {0, -1, 0, -1, 4, -1, 0, -1, 0};
  for (int ci = 0; ci < c; ++ci)
    for (int i = 0; i < 9; ++i) k.channel(ci)[i] = vals[i] * s;
  return k;
}

#define IMEX_INSTANTIATE_SPECTRAL(T)                                                      \
  template KernelPlane<T> embed_kernel<T>(const GroupKernel<T>&, int, int);               \
  template GroupKernel<T> gather_kernel<T>(const KernelPlane<T>&, int, int);              \
  template Symbol<T> symbol<T>(const KernelPlane<T>&);                                    \
  template std::vector<T> group_multiplier<T>(const GroupKernel<T>&, T, int, int);        \
  template Tensor4<T> apply_spectral_multiplier<T>(const Tensor4<T>&, const std::vector<T>&); \
  template Tensor4<T> solve_group_implicit<T>(const Tensor4<T>&, const GroupKernel<T>&, T); \
  template Tensor4<T> apply_identity_plus_hL<T>(const Tensor4<T>&, const GroupKernel<T>&, T); \
  template Tensor4<T> solve_direct_symmetric<T>(const Tensor4<T>&, const GroupKernel<T>&, T); \
  template GroupKernel<T> laplacian_kernel<T>(int);                                       \
  template GroupKernel<T> laplacian_factor_kernel<T>(int);

IMEX_INSTANTIATE_SPECTRAL(float)
IMEX_INSTANTIATE_SPECTRAL(double)

#undef IMEX_INSTANTIATE_SPECTRAL

}  // namespace imex
