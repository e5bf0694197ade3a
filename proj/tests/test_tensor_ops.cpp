#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "imex/ops.hpp"
#include "test_util.hpp"

using namespace imex;
using namespace testutil;

namespace {

template <class T>
ConvKernel<T> identity_kernel(int c, int kh, int kw) {
  ConvKernel<T> k(c, c, kh, kw);
  for (int i = 0; i < c; ++i) k.at(i, i, (kh - 1) / 2, (kw - 1) / 2) = T(1);
  return k;
}

struct BackendGuard {
  ConvBackend saved = conv_backend();
  ~BackendGuard() { select_conv_backend(saved); }
};

}  // namespace

TEST_CASE("conv2d identity and zero kernels") {
  Rng rng(1);
  auto x = random_tensor<float>(rng, 2, 3, 6, 8);
  auto out = conv2d_periodic(x, identity_kernel<float>(3, 3, 3));
  CHECK(max_diff(out, x) == 0.0);

  ConvKernel<float> zero(3, 3, 3, 3);
  auto z = conv2d_periodic(x, zero);
  CHECK(tensor_max_abs(z) == 0.0f);
}

TEST_CASE("conv2d wraps a corner delta per the true-convolution convention") {
  // delta at (0,0), kernel tap at offset (-1,-1): response lands at (3,3)
  Tensor4<float> x(1, 1, 4, 4);
  x.at(0, 0, 0, 0) = 1.0f;
  ConvKernel<float> k(1, 1, 3, 3);
  k.at(0, 0, 0, 0) = 1.0f;
  auto out = conv2d_periodic(x, k);
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx)
      CHECK(out.at(0, 0, y, xx) == (y == 3 && xx == 3 ? 1.0f : 0.0f));
}

TEST_CASE("conv2d linearity") {
  Rng rng(2);
  for (auto [h, w] : {std::pair{8, 8}, {8, 4}, {4, 16}}) {
    auto x = random_tensor<float>(rng, 1, 2, h, w);
    auto y = random_tensor<float>(rng, 1, 2, h, w);
    auto k = random_kernel<float>(rng, 3, 2, 3, 3);
    const float a = 1.7f, b = -0.4f;
    auto lhs = conv2d_periodic(add(scale(x, a), scale(y, b)), k);
    auto rhs = add(scale(conv2d_periodic(x, k), a), scale(conv2d_periodic(y, k), b));
    CHECK(rel_err(lhs, rhs) < 1e-5);
  }
}

TEST_CASE("conv2d shift equivariance") {
  Rng rng(3);
  auto x = random_tensor<float>(rng, 1, 2, 8, 8);
  auto k = random_kernel<float>(rng, 2, 2, 3, 3);
  for (auto [dy, dx] : {std::pair{1, 0}, {0, 1}, {3, 5}, {7, 2}}) {
    auto a = conv2d_periodic(circshift(x, dy, dx), k);
    auto b = circshift(conv2d_periodic(x, k), dy, dx);
    CHECK(max_diff(a, b) < 1e-6);
  }
}

TEST_CASE("conv2d adjoint identity over random triples") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = random_tensor<float>(rng, 1, 2, 8, 8);
    auto k = random_kernel<float>(rng, 3, 2, 3, 3);
    auto y = random_tensor<float>(rng, 1, 3, 8, 8);
    const double lhs = tensor_dot(conv2d_periodic(x, k), y);
    const double rhs = tensor_dot(x, conv2d_adjoint_periodic(y, k));
    CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
  }
}

TEST_CASE("symmetric single-channel stencil is self-adjoint") {
  Rng rng(5);
  auto x = random_tensor<float>(rng, 1, 1, 8, 8);
  ConvKernel<float> lap(1, 1, 3, 3);
  const float vals[9] = {-1, -4, -1, -4, 20, -4, -1, -4, -1};
  for (int i = 0; i < 9; ++i) lap.v[i] = vals[i] / 6.0f;
  CHECK(max_diff(conv2d_periodic(x, lap), conv2d_adjoint_periodic(x, lap)) < 1e-6);

  Tensor4<float> zero(1, 1, 8, 8);
  CHECK(tensor_max_abs(conv2d_adjoint_periodic(zero, lap)) == 0.0f);
}

TEST_CASE("conv backends agree") {
  BackendGuard guard;
  Rng rng(6);
  auto x = random_tensor<double>(rng, 2, 3, 8, 6);
  auto k = random_kernel<double>(rng, 4, 3, 3, 5);
  auto g = random_tensor<double>(rng, 2, 4, 8, 6);

  select_conv_backend(ConvBackend::reference);
  auto fwd_ref = conv2d_periodic(x, k);
  auto adj_ref = conv2d_adjoint_periodic(g, k);
  auto kg_ref = conv2d_kernel_grad(x, g, 3, 5);

  select_conv_backend(ConvBackend::gemm);
  auto fwd_gemm = conv2d_periodic(x, k);
  auto adj_gemm = conv2d_adjoint_periodic(g, k);
  auto kg_gemm = conv2d_kernel_grad(x, g, 3, 5);

  CHECK(rel_err(fwd_gemm, fwd_ref) < 1e-12);
  CHECK(rel_err(adj_gemm, adj_ref) < 1e-12);
  double kerr = 0.0;
  for (size_t i = 0; i < kg_ref.v.size(); ++i)
    kerr = std::max(kerr, std::abs(kg_ref.v[i] - kg_gemm.v[i]));
  CHECK(kerr < 1e-10);
}

TEST_CASE("kernel gradient satisfies the defining pairing") {
  // <dK, K'> == <G, conv(X, K')> for any K' since conv is linear in K
  Rng rng(7);
  auto x = random_tensor<double>(rng, 2, 2, 8, 8);
  auto g = random_tensor<double>(rng, 2, 3, 8, 8);
  auto dk = conv2d_kernel_grad(x, g, 3, 3);
  for (int trial = 0; trial < 10; ++trial) {
    auto kp = random_kernel<double>(rng, 3, 2, 3, 3);
    double lhs = 0.0;
    for (size_t i = 0; i < dk.v.size(); ++i) lhs += dk.v[i] * kp.v[i];
    const double rhs = tensor_dot(g, conv2d_periodic(x, kp));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("group conv identity stencils and c=1 equivalence") {
  Rng rng(8);
  auto x = random_tensor<float>(rng, 2, 3, 8, 8);
  GroupKernel<float> ident(3, 3, 3);
  for (int c = 0; c < 3; ++c) ident.at(c, 1, 1) = 1.0f;
  CHECK(max_diff(group_conv2d_periodic(x, ident), x) == 0.0);

  auto x1 = random_tensor<float>(rng, 1, 1, 8, 8);
  auto gk = random_group_kernel<float>(rng, 1, 3, 3);
  ConvKernel<float> ck(1, 1, 3, 3);
  ck.v = gk.v;
  CHECK(max_diff(group_conv2d_periodic(x1, gk), conv2d_periodic(x1, ck)) < 1e-6);
}

TEST_CASE("group conv matches a dense block-diagonal matrix oracle") {
  Rng rng(9);
  const int c = 3, h = 8, w = 8, n = h * w;
  auto x = random_tensor<double>(rng, 1, c, h, w);
  auto b = random_group_kernel<double>(rng, c, 3, 3);
  // dense operator built from kernel index arithmetic, one block per channel
  auto out = group_conv2d_periodic(x, b);
  for (int ci = 0; ci < c; ++ci) {
    std::vector<double> mat(static_cast<size_t>(n) * n, 0.0);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int yy = ((y - (ky - 1)) % h + h) % h;
            const int xs = ((xx - (kx - 1)) % w + w) % w;
            mat[static_cast<size_t>(y * w + xx) * n + (yy * w + xs)] += b.at(ci, ky, kx);
          }
    for (int p = 0; p < n; ++p) {
      double acc = 0.0;
      for (int q = 0; q < n; ++q) acc += mat[static_cast<size_t>(p) * n + q] * x.plane(0, ci)[q];
      CHECK(acc == doctest::Approx(out.plane(0, ci)[p]).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("group adjoint pairing") {
  Rng rng(10);
  auto x = random_tensor<double>(rng, 2, 2, 8, 4);
  auto g = random_tensor<double>(rng, 2, 2, 8, 4);
  auto b = random_group_kernel<double>(rng, 2, 3, 3);
  CHECK(tensor_dot(group_conv2d_periodic(x, b), g) ==
        doctest::Approx(tensor_dot(x, group_conv2d_adjoint_periodic(g, b))).epsilon(1e-12));

  auto db = group_kernel_grad(x, g, 3, 3);
  auto bp = random_group_kernel<double>(rng, 2, 3, 3);
  double lhs = 0.0;
  for (size_t i = 0; i < db.v.size(); ++i) lhs += db.v[i] * bp.v[i];
  CHECK(lhs == doctest::Approx(tensor_dot(g, group_conv2d_periodic(x, bp))).epsilon(1e-10));
}

TEST_CASE("instance norm standardizes, handles constants, and is affine") {
  Rng rng(11);
  auto x = random_tensor<float>(rng, 2, 3, 8, 8, -2.0, 5.0);
  NormParams<float> p(3);

  auto out = instance_norm(x, p);
  const size_t n = out.plane_size();
  for (int bi = 0; bi < 2; ++bi)
    for (int ci = 0; ci < 3; ++ci) {
      double mean = 0.0, var = 0.0;
      for (size_t i = 0; i < n; ++i) mean += out.plane(bi, ci)[i];
      mean /= n;
      for (size_t i = 0; i < n; ++i) {
        const double d = out.plane(bi, ci)[i] - mean;
        var += d * d;
      }
      var /= n;
      CHECK(std::abs(mean) <= 1e-6);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }

  NormParams<float> p2(3);
  for (int c = 0; c < 3; ++c) {
    p2.gamma[c] = 2.0f;
    p2.beta[c] = 1.0f;
  }
  auto out2 = instance_norm(x, p2);
  for (size_t i = 0; i < out.v.size(); ++i)
    CHECK(out2.v[i] == doctest::Approx(2.0f * out.v[i] + 1.0f).epsilon(1e-4).scale(1.0));

  Tensor4<float> constant(1, 1, 4, 4);
  for (auto& e : constant.v) e = 3.25f;
  NormParams<float> p3(1);
  p3.beta[0] = -0.5f;
  auto outc = instance_norm(constant, p3);
  for (auto e : outc.v) CHECK(e == doctest::Approx(-0.5f).epsilon(1e-6));
}

TEST_CASE("elementwise ops and conv1x1") {
  Rng rng(12);
  auto x = random_tensor<float>(rng, 1, 2, 4, 4);
  Tensor4<float> zero(1, 2, 4, 4);
  CHECK(max_diff(add(x, zero), x) == 0.0);

  auto r = relu(x);
  for (size_t i = 0; i < x.v.size(); ++i) CHECK(r.v[i] == std::max(x.v[i], 0.0f));

  auto ident = identity_kernel<float>(2, 1, 1);
  CHECK(max_diff(conv1x1(x, ident), x) == 0.0);

  std::vector<float> bias = {0.5f, -1.0f};
  auto xb = bias_add_channel(x, bias);
  CHECK(xb.at(0, 0, 1, 1) == doctest::Approx(x.at(0, 0, 1, 1) + 0.5f));
  CHECK(xb.at(0, 1, 2, 3) == doctest::Approx(x.at(0, 1, 2, 3) - 1.0f));
}

TEST_CASE("shape and precondition errors") {
  Rng rng(13);
  auto x = random_tensor<float>(rng, 1, 2, 8, 8);
  CHECK_THROWS_AS((void)conv2d_periodic(x, random_kernel<float>(rng, 2, 3, 3, 3)),
                  ValueError);  // channel mismatch
  CHECK_THROWS_AS((void)conv2d_periodic(x, ConvKernel<float>(2, 2, 4, 3)),
                  ValueError);  // even kernel
  CHECK_THROWS_AS((void)conv2d_periodic(x, ConvKernel<float>(2, 2, 9, 9)),
                  ValueError);  // kernel larger than image
  auto y = random_tensor<float>(rng, 1, 2, 8, 4);
  CHECK_THROWS_AS((void)add(x, y), ValueError);
  NormParams<float> p(3);
  CHECK_THROWS_AS((void)instance_norm(x, p), ValueError);
}

TEST_CASE("non-finite data is detected") {
  Tensor4<float> x(1, 1, 2, 2);
  x.v[2] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(validate_finite(x, "test tensor"), NumericError);
}
