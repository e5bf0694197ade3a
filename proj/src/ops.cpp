#include "imex/ops.hpp"

#include <cblas.h>

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace imex {

namespace detail {
extern int blas_tuning_anchor;
}

namespace {

ConvBackend resolve_conv_backend() {
  if (const char* env = std::getenv("IMEX_CONV")) {
    if (std::strcmp(env, "reference") == 0) return ConvBackend::reference;
    if (std::strcmp(env, "gemm") == 0) return ConvBackend::gemm;
    throw ValueError(std::string("unknown IMEX_CONV value: ") + env);
  }
  return ConvBackend::gemm;
}

std::atomic<int>& conv_backend_slot() {
  static std::atomic<int> slot{-1};
  return slot;
}

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  (void)detail::blas_tuning_anchor;
  cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  (void)detail::blas_tuning_anchor;
  cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <class T>
std::vector<T>& scratch_col() {
  thread_local std::vector<T> buf;
  return buf;
}

// Row rotation offset so that dst[x] = src[(x - mx) mod w] becomes two
// contiguous copies starting at src + off.
inline int wrap_offset(int mx, int w) { return ((-mx) % w + w) % w; }

template <class T>
void copy_rotated(const T* src, T* dst, int w, int off) {
  std::memcpy(dst, src + off, sizeof(T) * (w - off));
  std::memcpy(dst + (w - off), src, sizeof(T) * off);
}

// col layout: row ((ci*kh + ky)*kw + kx), each of length h*w, holding the
// input plane circularly shifted by the tap offset.
template <class T>
void im2col(const T* x, int cin, int h, int w, int kh, int kw, T* col) {
  const int mid1 = (kh - 1) / 2, mid2 = (kw - 1) / 2;
  const size_t hw = static_cast<size_t>(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    const T* xc = x + static_cast<size_t>(ci) * hw;
    for (int ky = 0; ky < kh; ++ky) {
      const int my = ky - mid1;
      for (int kx = 0; kx < kw; ++kx) {
        const int mx = kx - mid2;
        const int off = wrap_offset(mx, w);
        T* row = col + (static_cast<size_t>(ci) * kh * kw + ky * kw + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int yy = ((y - my) % h + h) % h;
          copy_rotated(xc + static_cast<size_t>(yy) * w, row + static_cast<size_t>(y) * w, w, off);
        }
      }
    }
  }
}

// Scatter-add transpose of im2col.
template <class T>
void col2im_add(const T* col, int cin, int h, int w, int kh, int kw, T* x) {
  const auto& K = kern::table<T>();
  const int mid1 = (kh - 1) / 2, mid2 = (kw - 1) / 2;
  const size_t hw = static_cast<size_t>(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    T* xc = x + static_cast<size_t>(ci) * hw;
    for (int ky = 0; ky < kh; ++ky) {
      const int my = ky - mid1;
      for (int kx = 0; kx < kw; ++kx) {
        const int mx = kx - mid2;
        const int off = wrap_offset(mx, w);
        const T* row = col + (static_cast<size_t>(ci) * kh * kw + ky * kw + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int yy = ((y - my) % h + h) % h;
          T* dst = xc + static_cast<size_t>(yy) * w;
          const T* src = row + static_cast<size_t>(y) * w;
          K.axpy(T(1), src, dst + off, w - off);
          K.axpy(T(1), src + (w - off), dst, off);
        }
      }
    }
  }
}

template <class T>
void check_conv_args(const Tensor4<T>& x, int cin, int kh, int kw) {
  require_odd_kernel(kh, kw);
  require(x.c == cin, "conv2d: channel mismatch, input has " + std::to_string(x.c) +
                          " channels, kernel expects " + std::to_string(cin));
  require(kh <= x.h && kw <= x.w, "conv2d: kernel " + std::to_string(kh) + "x" +
                                      std::to_string(kw) + " larger than image " +
                                      std::to_string(x.h) + "x" + std::to_string(x.w));
}

template <class T>
Tensor4<T> conv2d_reference(const Tensor4<T>& x, const ConvKernel<T>& k) {
  const int mid1 = (k.kh - 1) / 2, mid2 = (k.kw - 1) / 2;
  Tensor4<T> out(x.b, k.cout, x.h, x.w);
  for (int bi = 0; bi < x.b; ++bi)
    for (int o = 0; o < k.cout; ++o)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) {
          double acc = 0.0;
          for (int ci = 0; ci < k.cin; ++ci)
            for (int ky = 0; ky < k.kh; ++ky)
              for (int kx = 0; kx < k.kw; ++kx) {
                const int yy = ((y - (ky - mid1)) % x.h + x.h) % x.h;
                const int xs = ((xx - (kx - mid2)) % x.w + x.w) % x.w;
                acc += static_cast<double>(k.at(o, ci, ky, kx)) *
                       static_cast<double>(x.at(bi, ci, yy, xs));
              }
          out.at(bi, o, y, xx) = static_cast<T>(acc);
        }
  return out;
}

template <class T>
Tensor4<T> conv2d_gemm(const Tensor4<T>& x, const ConvKernel<T>& k) {
  const int hw = x.h * x.w;
  const int kd = k.cin * k.kh * k.kw;
  Tensor4<T> out(x.b, k.cout, x.h, x.w);
  auto& col = scratch_col<T>();
  col.resize(static_cast<size_t>(kd) * hw);
  for (int bi = 0; bi < x.b; ++bi) {
    im2col(x.plane(bi, 0), k.cin, x.h, x.w, k.kh, k.kw, col.data());
    gemm(CblasNoTrans, CblasNoTrans, k.cout, hw, kd, T(1), k.v.data(), kd, col.data(), hw,
         T(0), out.plane(bi, 0), hw);
  }
  return out;
}

template <class T>
Tensor4<T> conv2d_adjoint_reference(const Tensor4<T>& g, const ConvKernel<T>& k) {
  const int mid1 = (k.kh - 1) / 2, mid2 = (k.kw - 1) / 2;
  Tensor4<T> out(g.b, k.cin, g.h, g.w);
  for (int bi = 0; bi < g.b; ++bi)
    for (int ci = 0; ci < k.cin; ++ci)
      for (int y = 0; y < g.h; ++y)
        for (int xx = 0; xx < g.w; ++xx) {
          double acc = 0.0;
          for (int o = 0; o < k.cout; ++o)
            for (int ky = 0; ky < k.kh; ++ky)
              for (int kx = 0; kx < k.kw; ++kx) {
                const int yy = ((y + (ky - mid1)) % g.h + g.h) % g.h;
                const int xs = ((xx + (kx - mid2)) % g.w + g.w) % g.w;
                acc += static_cast<double>(k.at(o, ci, ky, kx)) *
                       static_cast<double>(g.at(bi, o, yy, xs));
              }
          out.at(bi, ci, y, xx) = static_cast<T>(acc);
        }
  return out;
}

template <class T>
Tensor4<T> conv2d_adjoint_gemm(const Tensor4<T>& g, const ConvKernel<T>& k) {
  const int hw = g.h * g.w;
  const int kd = k.cin * k.kh * k.kw;
  Tensor4<T> out(g.b, k.cin, g.h, g.w);
  auto& col = scratch_col<T>();
  col.resize(static_cast<size_t>(kd) * hw);
  for (int bi = 0; bi < g.b; ++bi) {
    gemm(CblasTrans, CblasNoTrans, kd, hw, k.cout, T(1), k.v.data(), kd, g.plane(bi, 0), hw,
         T(0), col.data(), hw);
    col2im_add(col.data(), k.cin, g.h, g.w, k.kh, k.kw, out.plane(bi, 0));
  }
  return out;
}

template <class T>
ConvKernel<T> kernel_grad_reference(const Tensor4<T>& x, const Tensor4<T>& g, int kh, int kw) {
  const int mid1 = (kh - 1) / 2, mid2 = (kw - 1) / 2;
  ConvKernel<T> dk(g.c, x.c, kh, kw);
  for (int o = 0; o < g.c; ++o)
    for (int ci = 0; ci < x.c; ++ci)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          double acc = 0.0;
          for (int bi = 0; bi < x.b; ++bi)
            for (int y = 0; y < x.h; ++y)
              for (int xx = 0; xx < x.w; ++xx) {
                const int yy = ((y - (ky - mid1)) % x.h + x.h) % x.h;
                const int xs = ((xx - (kx - mid2)) % x.w + x.w) % x.w;
                acc += static_cast<double>(g.at(bi, o, y, xx)) *
                       static_cast<double>(x.at(bi, ci, yy, xs));
              }
          dk.at(o, ci, ky, kx) = static_cast<T>(acc);
        }
  return dk;
}

template <class T>
ConvKernel<T> kernel_grad_gemm(const Tensor4<T>& x, const Tensor4<T>& g, int kh, int kw) {
  const int hw = x.h * x.w;
  const int kd = x.c * kh * kw;
  ConvKernel<T> dk(g.c, x.c, kh, kw);
  auto& col = scratch_col<T>();
  col.resize(static_cast<size_t>(kd) * hw);
  for (int bi = 0; bi < x.b; ++bi) {
    im2col(x.plane(bi, 0), x.c, x.h, x.w, kh, kw, col.data());
    gemm(CblasNoTrans, CblasTrans, g.c, kd, hw, T(1), g.plane(bi, 0), hw, col.data(), hw,
         T(1), dk.v.data(), kd);
  }
  return dk;
}

}  // namespace

ConvBackend conv_backend() {
  auto& slot = conv_backend_slot();
  int v = slot.load(std::memory_order_acquire);
  if (v < 0) {
    v = static_cast<int>(resolve_conv_backend());
    slot.store(v, std::memory_order_release);
  }
  return static_cast<ConvBackend>(v);
}

void select_conv_backend(ConvBackend b) {
  conv_backend_slot().store(static_cast<int>(b), std::memory_order_release);
}

template <class T>
Tensor4<T> conv2d_periodic(const Tensor4<T>& x, const ConvKernel<T>& k) {
  check_conv_args(x, k.cin, k.kh, k.kw);
  if (conv_backend() == ConvBackend::gemm) return conv2d_gemm(x, k);
  return conv2d_reference(x, k);
}

template <class T>
Tensor4<T> conv2d_adjoint_periodic(const Tensor4<T>& g, const ConvKernel<T>& k) {
  check_conv_args(g, k.cout, k.kh, k.kw);
  if (conv_backend() == ConvBackend::gemm) return conv2d_adjoint_gemm(g, k);
  return conv2d_adjoint_reference(g, k);
}

template <class T>
ConvKernel<T> conv2d_kernel_grad(const Tensor4<T>& x, const Tensor4<T>& g, int kh, int kw) {
  require_odd_kernel(kh, kw);
  require(x.b == g.b && x.h == g.h && x.w == g.w, "conv2d_kernel_grad: shape mismatch");
  if (conv_backend() == ConvBackend::gemm) return kernel_grad_gemm(x, g, kh, kw);
  return kernel_grad_reference(x, g, kh, kw);
}

template <class T>
Tensor4<T> group_conv2d_periodic(const Tensor4<T>& x, const GroupKernel<T>& b) {
  check_conv_args(x, b.c, b.kh, b.kw);
  const auto& K = kern::table<T>();
  const int mid1 = (b.kh - 1) / 2, mid2 = (b.kw - 1) / 2;
  Tensor4<T> out(x.b, x.c, x.h, x.w);
  for (int bi = 0; bi < x.b; ++bi)
    for (int ci = 0; ci < x.c; ++ci) {
      const T* src = x.plane(bi, ci);
      T* dst = out.plane(bi, ci);
      for (int ky = 0; ky < b.kh; ++ky) {
        const int my = ky - mid1;
        for (int kx = 0; kx < b.kw; ++kx) {
          const T coef = b.at(ci, ky, kx);
          if (coef == T(0)) continue;
          const int off = wrap_offset(kx - mid2, x.w);
          for (int y = 0; y < x.h; ++y) {
            const int yy = ((y - my) % x.h + x.h) % x.h;
            const T* srow = src + static_cast<size_t>(yy) * x.w;
            T* drow = dst + static_cast<size_t>(y) * x.w;
            K.axpy(coef, srow + off, drow, x.w - off);
            K.axpy(coef, srow, drow + (x.w - off), off);
          }
        }
      }
    }
  return out;
}

template <class T>
Tensor4<T> group_conv2d_adjoint_periodic(const Tensor4<T>& g, const GroupKernel<T>& b) {
  check_conv_args(g, b.c, b.kh, b.kw);
  const auto& K = kern::table<T>();
  const int mid1 = (b.kh - 1) / 2, mid2 = (b.kw - 1) / 2;
  Tensor4<T> out(g.b, g.c, g.h, g.w);
  for (int bi = 0; bi < g.b; ++bi)
    for (int ci = 0; ci < g.c; ++ci) {
      const T* src = g.plane(bi, ci);
      T* dst = out.plane(bi, ci);
      for (int ky = 0; ky < b.kh; ++ky) {
        const int my = ky - mid1;
        for (int kx = 0; kx < b.kw; ++kx) {
          const T coef = b.at(ci, ky, kx);
          if (coef == T(0)) continue;
          // correlation: source shifted the opposite way
          const int off = wrap_offset(-(kx - mid2), g.w);
          for (int y = 0; y < g.h; ++y) {
            const int yy = ((y + my) % g.h + g.h) % g.h;
            const T* srow = src + static_cast<size_t>(yy) * g.w;
            T* drow = dst + static_cast<size_t>(y) * g.w;
            K.axpy(coef, srow + off, drow, g.w - off);
            K.axpy(coef, srow, drow + (g.w - off), off);
          }
        }
      }
    }
  return out;
}

template <class T>
GroupKernel<T> group_kernel_grad(const Tensor4<T>& x, const Tensor4<T>& g, int kh, int kw) {
  require_odd_kernel(kh, kw);
  require(x.same_shape(g), "group_kernel_grad: shape mismatch");
  const auto& K = kern::table<T>();
  const int mid1 = (kh - 1) / 2, mid2 = (kw - 1) / 2;
  GroupKernel<T> db(x.c, kh, kw);
  for (int bi = 0; bi < x.b; ++bi)
    for (int ci = 0; ci < x.c; ++ci) {
      const T* xp = x.plane(bi, ci);
      const T* gp = g.plane(bi, ci);
      for (int ky = 0; ky < kh; ++ky) {
        const int my = ky - mid1;
        for (int kx = 0; kx < kw; ++kx) {
          const int off = wrap_offset(kx - mid2, x.w);
          double acc = 0.0;
          for (int y = 0; y < x.h; ++y) {
            const int yy = ((y - my) % x.h + x.h) % x.h;
            const T* srow = xp + static_cast<size_t>(yy) * x.w;
            const T* grow = gp + static_cast<size_t>(y) * x.w;
            acc += K.dot(grow, srow + off, x.w - off);
            acc += K.dot(grow + (x.w - off), srow, off);
          }
          db.at(ci, ky, kx) += static_cast<T>(acc);
        }
      }
    }
  return db;
}

template <class T>
Tensor4<T> instance_norm_stats(const Tensor4<T>& x, const NormParams<T>& p,
                               std::vector<T>& mean_out, std::vector<T>& inv_out) {
  require(x.c == p.channels(), "instance_norm: channel count mismatch");
  require(p.eps > T(0), "instance_norm: eps must be positive");
  const auto& K = kern::table<T>();
  const size_t n = x.plane_size();
  Tensor4<T> out(x.b, x.c, x.h, x.w);
  mean_out.assign(static_cast<size_t>(x.b) * x.c, T(0));
  inv_out.assign(static_cast<size_t>(x.b) * x.c, T(0));
  for (int bi = 0; bi < x.b; ++bi)
    for (int ci = 0; ci < x.c; ++ci) {
      const T* src = x.plane(bi, ci);
      const double mean = K.sum(src, n) / static_cast<double>(n);
      double var = K.sumsq(src, n) / static_cast<double>(n) - mean * mean;
      if (var < 0.0) var = 0.0;  // population variance, guard roundoff
      const double inv = 1.0 / std::sqrt(var + static_cast<double>(p.eps));
      const T a = static_cast<T>(static_cast<double>(p.gamma[ci]) * inv);
      // center first; folding the mean into the affine constant cancels badly
      T* dst = out.plane(bi, ci);
      K.affine(T(1), static_cast<T>(-mean), src, dst, n);
      K.affine(a, p.beta[ci], dst, dst, n);
      mean_out[static_cast<size_t>(bi) * x.c + ci] = static_cast<T>(mean);
      inv_out[static_cast<size_t>(bi) * x.c + ci] = static_cast<T>(inv);
    }
  return out;
}

template <class T>
Tensor4<T> instance_norm(const Tensor4<T>& x, const NormParams<T>& p) {
  std::vector<T> mean, inv;
  return instance_norm_stats(x, p, mean, inv);
}

template <class T>
Tensor4<T> relu(const Tensor4<T>& x) {
  Tensor4<T> out(x.b, x.c, x.h, x.w);
  kern::table<T>().relu(x.data(), out.data(), x.size());
  return out;
}

template <class T>
Tensor4<T> add(const Tensor4<T>& x, const Tensor4<T>& y) {
  require(x.same_shape(y), "add: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  Tensor4<T> out(x.b, x.c, x.h, x.w);
  kern::table<T>().add(x.data(), y.data(), out.data(), x.size());
  return out;
}

template <class T>
Tensor4<T> sub(const Tensor4<T>& x, const Tensor4<T>& y) {
  require(x.same_shape(y), "sub: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  Tensor4<T> out(x.b, x.c, x.h, x.w);
  kern::table<T>().sub(x.data(), y.data(), out.data(), x.size());
  return out;
}

template <class T>
Tensor4<T> scale(const Tensor4<T>& x, T s) {
  Tensor4<T> out(x.b, x.c, x.h, x.w);
  kern::table<T>().scale(s, x.data(), out.data(), x.size());
  return out;
}

template <class T>
Tensor4<T> conv1x1(const Tensor4<T>& x, const ConvKernel<T>& w) {
  require(w.kh == 1 && w.kw == 1, "conv1x1: kernel must be 1x1");
  return conv2d_periodic(x, w);
}

template <class T>
Tensor4<T> bias_add_channel(const Tensor4<T>& x, const std::vector<T>& bias) {
  require(static_cast<int>(bias.size()) == x.c, "bias_add_channel: channel mismatch");
  const auto& K = kern::table<T>();
  Tensor4<T> out(x.b, x.c, x.h, x.w);
  for (int bi = 0; bi < x.b; ++bi)
    for (int ci = 0; ci < x.c; ++ci)
      K.affine(T(1), bias[ci], x.plane(bi, ci), out.plane(bi, ci), x.plane_size());
  return out;
}

template <class T>
double tensor_dot(const Tensor4<T>& x, const Tensor4<T>& y) {
  require(x.same_shape(y), "tensor_dot: shape mismatch");
  return kern::table<T>().dot(x.data(), y.data(), x.size());
}

template <class T>
double tensor_norm2(const Tensor4<T>& x) {
  return std::sqrt(kern::table<T>().sumsq(x.data(), x.size()));
}

template <class T>
T tensor_max_abs(const Tensor4<T>& x) {
  return kern::table<T>().max_abs(x.data(), x.size());
}

#define IMEX_INSTANTIATE_OPS(T)                                                              \
  template Tensor4<T> conv2d_periodic<T>(const Tensor4<T>&, const ConvKernel<T>&);           \
  template Tensor4<T> conv2d_adjoint_periodic<T>(const Tensor4<T>&, const ConvKernel<T>&);   \
  template ConvKernel<T> conv2d_kernel_grad<T>(const Tensor4<T>&, const Tensor4<T>&, int,    \
                                               int);                                         \
  template Tensor4<T> group_conv2d_periodic<T>(const Tensor4<T>&, const GroupKernel<T>&);    \
  template Tensor4<T> group_conv2d_adjoint_periodic<T>(const Tensor4<T>&,                    \
                                                       const GroupKernel<T>&);               \
  template GroupKernel<T> group_kernel_grad<T>(const Tensor4<T>&, const Tensor4<T>&, int,    \
                                               int);                                         \
  template Tensor4<T> instance_norm_stats<T>(const Tensor4<T>&, const NormParams<T>&,        \
                                             std::vector<T>&, std::vector<T>&);              \
  template Tensor4<T> instance_norm<T>(const Tensor4<T>&, const NormParams<T>&);             \
  template Tensor4<T> relu<T>(const Tensor4<T>&);                                            \
  template Tensor4<T> add<T>(const Tensor4<T>&, const Tensor4<T>&);                          \
  template Tensor4<T> sub<T>(const Tensor4<T>&, const Tensor4<T>&);                          \
  template Tensor4<T> scale<T>(const Tensor4<T>&, T);                                        \
  template Tensor4<T> conv1x1<T>(const Tensor4<T>&, const ConvKernel<T>&);                   \
  template Tensor4<T> bias_add_channel<T>(const Tensor4<T>&, const std::vector<T>&);         \
  template double tensor_dot<T>(const Tensor4<T>&, const Tensor4<T>&);                       \
  template double tensor_norm2<T>(const Tensor4<T>&);                                        \
  template T tensor_max_abs<T>(const Tensor4<T>&);

IMEX_INSTANTIATE_OPS(float)
IMEX_INSTANTIATE_OPS(double)

#undef IMEX_INSTANTIATE_OPS

}  // namespace imex
