#include <cmath>

#include "imex/kernels.hpp"

namespace imex::kern {
namespace {

template <class T>
void add_ref(const T* x, const T* y, T* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

template <class T>
void sub_ref(const T* x, const T* y, T* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

template <class T>
void scale_ref(T a, const T* x, T* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

template <class T>
void axpy_ref(T a, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void affine_ref(T a, T b, const T* x, T* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a * x[i] + b;
}

template <class T>
void relu_ref(const T* x, T* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_mask_ref(const T* x, const T* g, T* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? g[i] : T(0);
}

template <class T>
double sum_ref(const T* x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

template <class T>
double dot_ref(const T* x, const T* y, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return acc;
}

template <class T>
double sumsq_ref(const T* x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return acc;
}

template <class T>
T max_abs_ref(const T* x, size_t n) {
  T m = T(0);
  for (size_t i = 0; i < n; ++i) {
    const T a = std::abs(x[i]);
    if (a > m) m = a;
  }
  return m;
}

template <class T>
void cmul_real_ref(std::complex<T>* z, const T* t, size_t n) {
  for (size_t i = 0; i < n; ++i) z[i] *= t[i];
}

template <class T>
void butterfly_ref(std::complex<T>* a, std::complex<T>* b, T wre, T wim, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    const T br = b[i].real(), bi = b[i].imag();
    const T tr = wre * br - wim * bi;
    const T ti = wre * bi + wim * br;
    const T ar = a[i].real(), ai = a[i].imag();
    a[i] = {ar + tr, ai + ti};
    b[i] = {ar - tr, ai - ti};
  }
}

template <class T>
constexpr Table<T> make_scalar_table() {
  return Table<T>{add_ref<T>,  sub_ref<T>,   scale_ref<T>,   axpy_ref<T>,
                  affine_ref<T>, relu_ref<T>, relu_mask_ref<T>, sum_ref<T>,
                  dot_ref<T>,  sumsq_ref<T>, max_abs_ref<T>, cmul_real_ref<T>,
                  butterfly_ref<T>};
}

}  // namespace

const Table<float>& scalar_table_f32() {
  static const Table<float> t = make_scalar_table<float>();
  return t;
}

const Table<double>& scalar_table_f64() {
  static const Table<double> t = make_scalar_table<double>();
  return t;
}

}  // namespace imex::kern
