// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; the dispatcher only hands out this table after a cpuid check.

#include <immintrin.h>

#include <cmath>

#include "imex/kernels.hpp"

namespace imex::kern {
namespace {

// ---------------------------------------------------------------- float ---

void add_f32(const float* x, const float* y, float* out, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_f32(const float* x, const float* y, float* out, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void scale_f32(float a, const float* x, float* out, size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void axpy_f32(float a, const float* x, float* y, size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void affine_f32(float a, float b, const float* x, float* out, size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  const __m256 vb = _mm256_set1_ps(b);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vb));
  for (; i < n; ++i) out[i] = std::fma(a, x[i], b);
}

void relu_f32(const float* x, float* out, size_t n) {
  const __m256 z = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_mask_f32(const float* x, const float* g, float* out, size_t n) {
  const __m256 z = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 m = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i, _mm256_and_ps(m, _mm256_loadu_ps(g + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

double hsum_pd(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double sum_f32(const float* x, size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    a0 = _mm256_add_pd(a0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    a1 = _mm256_add_pd(a1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double acc = hsum_pd(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

double dot_f32(const float* x, const float* y, size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 vy = _mm256_loadu_ps(y + i);
    a0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(vx)),
                         _mm256_cvtps_pd(_mm256_castps256_ps128(vy)), a0);
    a1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1)),
                         _mm256_cvtps_pd(_mm256_extractf128_ps(vy, 1)), a1);
  }
  double acc = hsum_pd(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return acc;
}

double sumsq_f32(const float* x, size_t n) { return dot_f32(x, x, n); }

float max_abs_f32(const float* x, size_t n) {
  const __m256 signmask = _mm256_set1_ps(-0.0f);
  __m256 m = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    m = _mm256_max_ps(m, _mm256_andnot_ps(signmask, _mm256_loadu_ps(x + i)));
  float best = 0.0f;
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, m);
  for (float l : lanes)
    if (l > best) best = l;
  for (; i < n; ++i) {
    const float a = std::fabs(x[i]);
    if (a > best) best = a;
  }
  return best;
}

void cmul_real_f32(std::complex<float>* z, const float* t, size_t n) {
  float* zf = reinterpret_cast<float*>(z);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m128 tv = _mm_loadu_ps(t + i);
    const __m256 tdup = _mm256_set_m128(_mm_unpackhi_ps(tv, tv), _mm_unpacklo_ps(tv, tv));
    _mm256_storeu_ps(zf + 2 * i, _mm256_mul_ps(_mm256_loadu_ps(zf + 2 * i), tdup));
  }
  for (; i < n; ++i) z[i] *= t[i];
}

void butterfly_f32(std::complex<float>* a, std::complex<float>* b, float wre, float wim,
                   size_t n) {
  float* af = reinterpret_cast<float*>(a);
  float* bf = reinterpret_cast<float*>(b);
  const __m256 vwr = _mm256_set1_ps(wre);
  const __m256 vwi = _mm256_set1_ps(wim);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256 vb = _mm256_loadu_ps(bf + 2 * i);
    const __m256 vbswap = _mm256_permute_ps(vb, 0b10110001);
    // w*b: even lanes wre*br - wim*bi, odd lanes wre*bi + wim*br
    const __m256 wb = _mm256_addsub_ps(_mm256_mul_ps(vwr, vb), _mm256_mul_ps(vwi, vbswap));
    const __m256 va = _mm256_loadu_ps(af + 2 * i);
    _mm256_storeu_ps(af + 2 * i, _mm256_add_ps(va, wb));
    _mm256_storeu_ps(bf + 2 * i, _mm256_sub_ps(va, wb));
  }
  for (; i < n; ++i) {
    const float br = b[i].real(), bi = b[i].imag();
    const float tr = wre * br - wim * bi;
    const float ti = wre * bi + wim * br;
    const float ar = a[i].real(), ai = a[i].imag();
    a[i] = {ar + tr, ai + ti};
    b[i] = {ar - tr, ai - ti};
  }
}

// --------------------------------------------------------------- double ---

void add_f64(const double* x, const double* y, double* out, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_f64(const double* x, const double* y, double* out, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void scale_f64(double a, const double* x, double* out, size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void axpy_f64(double a, const double* x, double* y, size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void affine_f64(double a, double b, const double* x, double* out, size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vb));
  for (; i < n; ++i) out[i] = std::fma(a, x[i], b);
}

void relu_f64(const double* x, double* out, size_t n) {
  const __m256d z = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_mask_f64(const double* x, const double* g, double* out, size_t n) {
  const __m256d z = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d m = _mm256_cmp_pd(_mm256_loadu_pd(x + i), z, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(m, _mm256_loadu_pd(g + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

double sum_f64(const double* x, size_t n) {
  __m256d a0 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
  double acc = hsum_pd(a0);
  for (; i < n; ++i) acc += x[i];
  return acc;
}

double dot_f64(const double* x, const double* y, size_t n) {
  __m256d a0 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  double acc = hsum_pd(a0);
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sumsq_f64(const double* x, size_t n) { return dot_f64(x, x, n); }

double max_abs_f64(const double* x, size_t n) {
  const __m256d signmask = _mm256_set1_pd(-0.0);
  __m256d m = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    m = _mm256_max_pd(m, _mm256_andnot_pd(signmask, _mm256_loadu_pd(x + i)));
  double best = 0.0;
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, m);
  for (double l : lanes)
    if (l > best) best = l;
  for (; i < n; ++i) {
    const double a = std::fabs(x[i]);
    if (a > best) best = a;
  }
  return best;
}

void cmul_real_f64(std::complex<double>* z, const double* t, size_t n) {
  double* zd = reinterpret_cast<double*>(z);
  size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m128d tv = _mm_loadu_pd(t + i);
    const __m256d tdup = _mm256_set_m128d(_mm_unpackhi_pd(tv, tv), _mm_unpacklo_pd(tv, tv));
    _mm256_storeu_pd(zd + 2 * i, _mm256_mul_pd(_mm256_loadu_pd(zd + 2 * i), tdup));
  }
  for (; i < n; ++i) z[i] *= t[i];
}

void butterfly_f64(std::complex<double>* a, std::complex<double>* b, double wre, double wim,
                   size_t n) {
  double* ad = reinterpret_cast<double*>(a);
  double* bd = reinterpret_cast<double*>(b);
  const __m256d vwr = _mm256_set1_pd(wre);
  const __m256d vwi = _mm256_set1_pd(wim);
  size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d vb = _mm256_loadu_pd(bd + 2 * i);
    const __m256d vbswap = _mm256_permute_pd(vb, 0b0101);
    const __m256d wb = _mm256_addsub_pd(_mm256_mul_pd(vwr, vb), _mm256_mul_pd(vwi, vbswap));
    const __m256d va = _mm256_loadu_pd(ad + 2 * i);
    _mm256_storeu_pd(ad + 2 * i, _mm256_add_pd(va, wb));
    _mm256_storeu_pd(bd + 2 * i, _mm256_sub_pd(va, wb));
  }
  for (; i < n; ++i) {
    const double br = b[i].real(), bi = b[i].imag();
    const double tr = wre * br - wim * bi;
    const double ti = wre * bi + wim * br;
    const double ar = a[i].real(), ai = a[i].imag();
    a[i] = {ar + tr, ai + ti};
    b[i] = {ar - tr, ai - ti};
  }
}

}  // namespace

const Table<float>& avx2_table_f32() {
  static const Table<float> t{add_f32,  sub_f32,   scale_f32,   axpy_f32,
                              affine_f32, relu_f32, relu_mask_f32, sum_f32,
                              dot_f32,  sumsq_f32, max_abs_f32, cmul_real_f32,
                              butterfly_f32};
  return t;
}

const Table<double>& avx2_table_f64() {
  static const Table<double> t{add_f64,  sub_f64,   scale_f64,   axpy_f64,
                              affine_f64, relu_f64, relu_mask_f64, sum_f64,
                              dot_f64,  sumsq_f64, max_abs_f64, cmul_real_f64,
                              butterfly_f64};
  return t;
}

}  // namespace imex::kern
