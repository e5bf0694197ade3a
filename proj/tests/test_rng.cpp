#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "imex/rng.hpp"

using imex::Rng;

TEST_CASE("splitmix64 reference values") {
  Rng r(0);
  CHECK(r.next_u64() == 0xE220A8397B1DCDAFull);
  Rng r2(42);
  // stream must differ from the zero-seeded one
  CHECK(r2.next_u64() != 0xE220A8397B1DCDAFull);
}

TEST_CASE("equal seeds give identical streams") {
  Rng a(123456789), b(123456789);
  for (int i = 0; i < 10000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform_int degenerate and bounds") {
  Rng r(7);
  for (int i = 0; i < 100; ++i) CHECK(r.uniform_int(5, 5) == 5);
  std::set<int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const int64_t v = r.uniform_int(-3, 3);
    CHECK(v >= -3);
    CHECK(v <= 3);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);  // all values of a small range show up
  CHECK_THROWS_AS((void)r.uniform_int(3, 2), imex::ValueError);
}

TEST_CASE("uniform_unit range and mean") {
  Rng r(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  const double mean = sum / 100000.0;
  CHECK(mean > 0.49);
  CHECK(mean < 0.51);
}

TEST_CASE("gaussian_clt is centered with unit-ish variance") {
  Rng r(2);
  double sum = 0.0, sumsq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double g = r.gaussian_clt();
    sum += g;
    sumsq += g * g;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.05));
}
