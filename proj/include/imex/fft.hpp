#pragma once

#include <complex>
#include <vector>

#include "imex/common.hpp"

// Radix-2 complex FFT, power-of-two sizes only. 1-D transforms run scalar
// over contiguous rows; the 2-D column pass runs whole-row butterflies
// through the dispatched kernels, so it vectorizes without transposes.

namespace imex {

bool is_power_of_two(int n);

template <class T>
class FftPlan {
 public:
  explicit FftPlan(int n);

  int size() const { return n_; }
  void forward(std::complex<T>* data) const;
  /// Inverse transform including the 1/n normalization.
  void inverse(std::complex<T>* data) const;

 private:
  void transform(std::complex<T>* data, bool inverse) const;

  int n_ = 1;
  std::vector<int> bitrev_;
  std::vector<std::complex<T>> tw_;  // exp(-2*pi*i*k/n), k < n/2
};

/// In-place 2-D transform of an h-by-w row-major complex plane.
template <class T>
void fft2d_forward(std::complex<T>* plane, int h, int w);

/// In-place inverse 2-D transform including the 1/(h*w) normalization.
template <class T>
void fft2d_inverse(std::complex<T>* plane, int h, int w);

}  // namespace imex
