#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>
#include <vector>

#include "imex/kernels.hpp"
#include "imex/rng.hpp"

using imex::Rng;
namespace kern = imex::kern;

namespace {

template <class T>
std::vector<T> random_vec(Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(n);
  for (auto& e : v) e = static_cast<T>(lo + (hi - lo) * rng.uniform_unit());
  return v;
}

// Sizes straddling the vector widths and their remainder tails.
const size_t kSizes[] = {0, 1, 3, 7, 8, 9, 16, 31, 64, 257, 1000, 1025};

template <class T>
void check_close(const std::vector<T>& a, const std::vector<T>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(static_cast<double>(a[i]) ==
          doctest::Approx(static_cast<double>(b[i])).epsilon(tol).scale(1.0));
}

template <class T>
void equivalence_suite() {
  if (!kern::cpu_has_avx2()) return;
  const auto& S = kern::table<T>(kern::Isa::scalar);
  const auto& V = kern::table<T>(kern::Isa::avx2);
  Rng rng(99);
  const double tol = std::is_same_v<T, float> ? 1e-6 : 1e-14;
  for (size_t n : kSizes) {
    auto x = random_vec<T>(rng, n), y = random_vec<T>(rng, n);
    std::vector<T> a(n), b(n);

    S.add(x.data(), y.data(), a.data(), n);
    V.add(x.data(), y.data(), b.data(), n);
    CHECK(a == b);

    S.sub(x.data(), y.data(), a.data(), n);
    V.sub(x.data(), y.data(), b.data(), n);
    CHECK(a == b);

    S.scale(T(0.37), x.data(), a.data(), n);
    V.scale(T(0.37), x.data(), b.data(), n);
    CHECK(a == b);

    a = y;
    b = y;
    S.axpy(T(-1.3), x.data(), a.data(), n);
    V.axpy(T(-1.3), x.data(), b.data(), n);
    check_close(a, b, tol);

    S.affine(T(2.5), T(-0.7), x.data(), a.data(), n);
    V.affine(T(2.5), T(-0.7), x.data(), b.data(), n);
    check_close(a, b, tol);

    S.relu(x.data(), a.data(), n);
    V.relu(x.data(), b.data(), n);
    CHECK(a == b);

    S.relu_mask(x.data(), y.data(), a.data(), n);
    V.relu_mask(x.data(), y.data(), b.data(), n);
    CHECK(a == b);

    CHECK(S.sum(x.data(), n) == doctest::Approx(V.sum(x.data(), n)).epsilon(1e-12).scale(1.0));
    CHECK(S.dot(x.data(), y.data(), n) ==
          doctest::Approx(V.dot(x.data(), y.data(), n)).epsilon(1e-12).scale(1.0));
    CHECK(S.sumsq(x.data(), n) ==
          doctest::Approx(V.sumsq(x.data(), n)).epsilon(1e-12).scale(1.0));
    CHECK(S.max_abs(x.data(), n) == V.max_abs(x.data(), n));

    if (n % 2 == 0) {
      const size_t nc = n / 2;
      auto t = random_vec<T>(rng, nc);
      std::vector<std::complex<T>> za(nc), zb(nc);
      for (size_t i = 0; i < nc; ++i) za[i] = zb[i] = {x[2 * i], x[2 * i + 1]};
      S.cmul_real(za.data(), t.data(), nc);
      V.cmul_real(zb.data(), t.data(), nc);
      CHECK(za == zb);

      std::vector<std::complex<T>> pa(nc), pb(nc), qa(nc), qb(nc);
      for (size_t i = 0; i < nc; ++i) {
        pa[i] = pb[i] = {x[2 * i], y[2 * i]};
        qa[i] = qb[i] = {y[2 * i + 1], x[2 * i + 1]};
      }
      S.butterfly(pa.data(), qa.data(), T(0.6), T(-0.8), nc);
      V.butterfly(pb.data(), qb.data(), T(0.6), T(-0.8), nc);
      for (size_t i = 0; i < nc; ++i) {
        CHECK(pa[i].real() == doctest::Approx(pb[i].real()).epsilon(tol).scale(1.0));
        CHECK(pa[i].imag() == doctest::Approx(pb[i].imag()).epsilon(tol).scale(1.0));
        CHECK(qa[i].real() == doctest::Approx(qb[i].real()).epsilon(tol).scale(1.0));
        CHECK(qa[i].imag() == doctest::Approx(qb[i].imag()).epsilon(tol).scale(1.0));
      }
    }
  }
}

}  // namespace

TEST_CASE("avx2 kernels match the scalar reference (float)") { equivalence_suite<float>(); }
TEST_CASE("avx2 kernels match the scalar reference (double)") { equivalence_suite<double>(); }

TEST_CASE("relu semantics") {
  const float x[4] = {-1.0f, 2.0f, 0.0f, -0.5f};
  float out[4];
  kern::table<float>().relu(x, out, 4);
  CHECK(out[0] == 0.0f);
  CHECK(out[1] == 2.0f);
  CHECK(out[2] == 0.0f);
  CHECK(out[3] == 0.0f);
}

TEST_CASE("reductions reduce in double") {
  // 1 + 1e-8 repeated: a float accumulator would lose the tail entirely.
  std::vector<float> v(4096, 1e-8f);
  v[0] = 1.0f;
  const double s = kern::table<float>().sum(v.data(), v.size());
  CHECK(s == doctest::Approx(1.0 + 4095 * 1e-8).epsilon(1e-9));
}

TEST_CASE("backend selection") {
  const kern::Isa orig = kern::active();
  kern::select(kern::Isa::scalar);
  CHECK(kern::active() == kern::Isa::scalar);
  if (kern::cpu_has_avx2()) {
    kern::select(kern::Isa::avx2);
    CHECK(kern::active() == kern::Isa::avx2);
  }
  kern::select(orig);
}
