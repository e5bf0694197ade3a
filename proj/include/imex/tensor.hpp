#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "imex/common.hpp"
#include "imex/rng.hpp"

namespace imex {

/// Dense rank-4 feature array, layout (batch, channel, height, width) with
/// width fastest. Single or double precision per instantiation.
template <class T>
struct Tensor4 {
  int b = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor4() = default;
  Tensor4(int b_, int c_, int h_, int w_)
      : b(b_), c(c_), h(h_), w(w_) {
    if (b_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
      throw ValueError("Tensor4: negative dimension");
    v.assign(static_cast<size_t>(b_) * c_ * h_ * w_, T(0));
  }

  size_t size() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  size_t plane_size() const { return static_cast<size_t>(h) * w; }

  T* plane(int bi, int ci) {
    return v.data() + (static_cast<size_t>(bi) * c + ci) * plane_size();
  }
  const T* plane(int bi, int ci) const {
    return v.data() + (static_cast<size_t>(bi) * c + ci) * plane_size();
  }

  T& at(int bi, int ci, int y, int x) {
    return v[((static_cast<size_t>(bi) * c + ci) * h + y) * w + x];
  }
  T at(int bi, int ci, int y, int x) const {
    return v[((static_cast<size_t>(bi) * c + ci) * h + y) * w + x];
  }

  bool same_shape(const Tensor4& o) const {
    return b == o.b && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    return "(" + std::to_string(b) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

/// Channel-mixing convolution weights, shape (cout, cin, kh, kw); kh, kw odd.
template <class T>
struct ConvKernel {
  int cout = 0, cin = 0, kh = 0, kw = 0;
  std::vector<T> v;

  ConvKernel() = default;
  ConvKernel(int cout_, int cin_, int kh_, int kw_)
      : cout(cout_), cin(cin_), kh(kh_), kw(kw_) {
    v.assign(static_cast<size_t>(cout_) * cin_ * kh_ * kw_, T(0));
  }

  T& at(int o, int i, int y, int x) {
    return v[((static_cast<size_t>(o) * cin + i) * kh + y) * kw + x];
  }
  T at(int o, int i, int y, int x) const {
    return v[((static_cast<size_t>(o) * cin + i) * kh + y) * kw + x];
  }
  size_t size() const { return v.size(); }
};

/// Per-channel convolution weights (no channel mixing), shape (c, kh, kw).
template <class T>
struct GroupKernel {
  int c = 0, kh = 0, kw = 0;
  std::vector<T> v;

  GroupKernel() = default;
  GroupKernel(int c_, int kh_, int kw_) : c(c_), kh(kh_), kw(kw_) {
    v.assign(static_cast<size_t>(c_) * kh_ * kw_, T(0));
  }

  T* channel(int ci) { return v.data() + static_cast<size_t>(ci) * kh * kw; }
  const T* channel(int ci) const { return v.data() + static_cast<size_t>(ci) * kh * kw; }
  T& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * kh + y) * kw + x]; }
  T at(int ci, int y, int x) const { return v[(static_cast<size_t>(ci) * kh + y) * kw + x]; }
  size_t size() const { return v.size(); }
};

/// Per-channel affine normalization parameters (scale gamma, shift beta).
template <class T>
struct NormParams {
  std::vector<T> gamma, beta;
  T eps = T(1e-5);

  NormParams() = default;
  explicit NormParams(int c) : gamma(c, T(1)), beta(c, T(0)) {}
  int channels() const { return static_cast<int>(gamma.size()); }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValueError(msg);
}

inline void require_odd_kernel(int kh, int kw) {
  if (kh <= 0 || kw <= 0 || kh % 2 == 0 || kw % 2 == 0)
    throw ValueError("kernel dims must be odd and positive, got " +
                     std::to_string(kh) + "x" + std::to_string(kw));
}

template <class T>
void validate_finite(const Tensor4<T>& x, const char* what) {
  for (const T& e : x.v)
    if (!std::isfinite(e))
      throw NumericError(std::string("non-finite value in ") + what);
}

/// Fill with independent uniform draws on [lo, hi).
template <class T>
void fill_uniform(std::vector<T>& v, Rng& rng, double lo, double hi) {
  for (T& e : v) e = static_cast<T>(lo + (hi - lo) * rng.uniform_unit());
}

}  // namespace imex
