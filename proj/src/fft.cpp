#include "imex/fft.hpp"

#include <cmath>
#include <map>

#include "imex/kernels.hpp"

namespace imex {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

template <class T>
FftPlan<T>::FftPlan(int n) : n_(n) {
  if (!is_power_of_two(n))
    throw ValueError("FftPlan: size must be a power of two, got " + std::to_string(n));
  bitrev_.resize(n);
  int log2n = 0;
  while ((1 << log2n) < n) ++log2n;
  for (int i = 0; i < n; ++i) {
    int r = 0;
    for (int bit = 0; bit < log2n; ++bit)
      if (i & (1 << bit)) r |= 1 << (log2n - 1 - bit);
    bitrev_[i] = r;
  }
  tw_.resize(n / 2);
  for (int k = 0; k < n / 2; ++k) {
    const double ang = -2.0 * M_PI * k / n;
    tw_[k] = std::complex<T>(static_cast<T>(std::cos(ang)), static_cast<T>(std::sin(ang)));
  }
}

template <class T>
void FftPlan<T>::transform(std::complex<T>* data, bool inverse) const {
  for (int i = 0; i < n_; ++i)
    if (bitrev_[i] > i) std::swap(data[i], data[bitrev_[i]]);
  for (int len = 2; len <= n_; len <<= 1) {
    const int half = len / 2;
    const int step = n_ / len;
    for (int start = 0; start < n_; start += len) {
      for (int j = 0; j < half; ++j) {
        const std::complex<T> w = tw_[static_cast<size_t>(j) * step];
        const T wre = w.real();
        const T wim = inverse ? -w.imag() : w.imag();
        std::complex<T>& a = data[start + j];
        std::complex<T>& b = data[start + j + half];
        const T br = b.real(), bi = b.imag();
        const T tr = wre * br - wim * bi;
        const T ti = wre * bi + wim * br;
        const T ar = a.real(), ai = a.imag();
        a = {ar + tr, ai + ti};
        b = {ar - tr, ai - ti};
      }
    }
  }
}

template <class T>
void FftPlan<T>::forward(std::complex<T>* data) const {
  transform(data, false);
}

template <class T>
void FftPlan<T>::inverse(std::complex<T>* data) const {
  transform(data, true);
  const T s = T(1) / static_cast<T>(n_);
  T* f = reinterpret_cast<T*>(data);
  kern::table<T>().scale(s, f, f, static_cast<size_t>(n_) * 2);
}

template <class T>
const FftPlan<T>& cached_plan(int n) {
  thread_local std::map<int, FftPlan<T>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, FftPlan<T>(n)).first;
  return it->second;
}

namespace {

// Column pass: the same radix-2 schedule over row indices, each butterfly
// applied to whole rows at once.
template <class T>
void fft_rows_as_columns(std::complex<T>* plane, int h, int w, const FftPlan<T>& plan,
                         bool inverse, const std::vector<int>& bitrev,
                         const std::vector<std::complex<T>>& tw) {
  (void)plan;
  const auto& K = kern::table<T>();
  std::vector<std::complex<T>> rowbuf(w);
  for (int i = 0; i < h; ++i) {
    const int r = bitrev[i];
    if (r > i) {
      std::complex<T>* a = plane + static_cast<size_t>(i) * w;
      std::complex<T>* b = plane + static_cast<size_t>(r) * w;
      std::copy(a, a + w, rowbuf.data());
      std::copy(b, b + w, a);
      std::copy(rowbuf.data(), rowbuf.data() + w, b);
    }
  }
  for (int len = 2; len <= h; len <<= 1) {
    const int half = len / 2;
    const int step = h / len;
    for (int start = 0; start < h; start += len) {
      for (int j = 0; j < half; ++j) {
        const std::complex<T> wv = tw[static_cast<size_t>(j) * step];
        const T wre = wv.real();
        const T wim = inverse ? -wv.imag() : wv.imag();
        K.butterfly(plane + static_cast<size_t>(start + j) * w,
                    plane + static_cast<size_t>(start + j + half) * w, wre, wim,
                    static_cast<size_t>(w));
      }
    }
  }
}

template <class T>
struct ColPlanParts {
  std::vector<int> bitrev;
  std::vector<std::complex<T>> tw;
};

template <class T>
const ColPlanParts<T>& cached_col_parts(int h) {
  thread_local std::map<int, ColPlanParts<T>> cache;
  auto it = cache.find(h);
  if (it == cache.end()) {
    if (!is_power_of_two(h))
      throw ValueError("fft2d: size must be a power of two, got " + std::to_string(h));
    ColPlanParts<T> p;
    p.bitrev.resize(h);
    int log2n = 0;
    while ((1 << log2n) < h) ++log2n;
    for (int i = 0; i < h; ++i) {
      int r = 0;
      for (int bit = 0; bit < log2n; ++bit)
        if (i & (1 << bit)) r |= 1 << (log2n - 1 - bit);
      p.bitrev[i] = r;
    }
    p.tw.resize(h / 2);
    for (int k = 0; k < h / 2; ++k) {
      const double ang = -2.0 * M_PI * k / h;
      p.tw[k] = std::complex<T>(static_cast<T>(std::cos(ang)), static_cast<T>(std::sin(ang)));
    }
    it = cache.emplace(h, std::move(p)).first;
  }
  return it->second;
}

template <class T>
void fft2d_impl(std::complex<T>* plane, int h, int w, bool inverse) {
  const FftPlan<T>& row_plan = cached_plan<T>(w);
  for (int y = 0; y < h; ++y) {
    std::complex<T>* row = plane + static_cast<size_t>(y) * w;
    if (inverse)
      row_plan.inverse(row);
    else
      row_plan.forward(row);
  }
  if (h > 1) {
    const auto& parts = cached_col_parts<T>(h);
    fft_rows_as_columns(plane, h, w, row_plan, inverse, parts.bitrev, parts.tw);
    if (inverse) {
      const T s = T(1) / static_cast<T>(h);
      T* f = reinterpret_cast<T*>(plane);
      kern::table<T>().scale(s, f, f, static_cast<size_t>(h) * w * 2);
    }
  }
}

}  // namespace

template <class T>
void fft2d_forward(std::complex<T>* plane, int h, int w) {
  fft2d_impl(plane, h, w, false);
}

template <class T>
void fft2d_inverse(std::complex<T>* plane, int h, int w) {
  fft2d_impl(plane, h, w, true);
}

template class FftPlan<float>;
template class FftPlan<double>;
template void fft2d_forward<float>(std::complex<float>*, int, int);
template void fft2d_forward<double>(std::complex<double>*, int, int);
template void fft2d_inverse<float>(std::complex<float>*, int, int);
template void fft2d_inverse<double>(std::complex<double>*, int, int);

}  // namespace imex
