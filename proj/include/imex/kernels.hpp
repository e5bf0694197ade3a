#pragma once

#include <complex>
#include <cstddef>

#include "imex/common.hpp"

// Flat-array arithmetic kernels behind every tensor operation. Each entry
// point has a scalar reference implementation and an AVX2 variant; the
// active table is chosen once at startup (override with IMEX_ISA=scalar or
// kern::select). Reductions accumulate in double in both variants.

namespace imex::kern {

enum class Isa { scalar, avx2 };

bool cpu_has_avx2();

/// Currently active instruction set (resolves on first use).
Isa active();

/// Force a backend; throws ValueError if the CPU lacks it.
void select(Isa isa);

template <class T>
struct Table {
  void (*add)(const T* x, const T* y, T* out, size_t n);
  void (*sub)(const T* x, const T* y, T* out, size_t n);
  void (*scale)(T a, const T* x, T* out, size_t n);
  void (*axpy)(T a, const T* x, T* y, size_t n);         // y += a*x
  void (*affine)(T a, T b, const T* x, T* out, size_t n);  // out = a*x + b
  void (*relu)(const T* x, T* out, size_t n);
  void (*relu_mask)(const T* x, const T* g, T* out, size_t n);  // x>0 ? g : 0
  double (*sum)(const T* x, size_t n);
  double (*dot)(const T* x, const T* y, size_t n);
  double (*sumsq)(const T* x, size_t n);
  T (*max_abs)(const T* x, size_t n);
  void (*cmul_real)(std::complex<T>* z, const T* t, size_t n);  // z[k] *= t[k]
  // FFT butterfly over complex rows: (a, b) <- (a + w*b, a - w*b)
  void (*butterfly)(std::complex<T>* a, std::complex<T>* b, T wre, T wim, size_t n);
};

template <class T>
const Table<T>& table(Isa isa);

/// Table for the active backend.
template <class T>
inline const Table<T>& table() {
  return table<T>(active());
}

}  // namespace imex::kern
