#include "imex/stability.hpp"

#include <cmath>

namespace imex {

double magnification_forward_euler(std::complex<double> lambda, double h) {
  if (h <= 0.0) throw ValueError("magnification_forward_euler: h must be positive");
  return std::abs(1.0 + h * lambda);
}

double magnification_imex(std::complex<double> lambda, double h, double alpha) {
  if (h <= 0.0) throw ValueError("magnification_imex: h must be positive");
  if (alpha < 0.0) throw ValueError("magnification_imex: alpha must be non-negative");
  return std::abs(1.0 + h * lambda + h * alpha) / (1.0 + h * alpha);
}

AlphaBound alpha_bound(std::span<const std::complex<double>> lambdas, double h) {
  if (h <= 0.0) throw ValueError("alpha_bound: h must be positive");
  AlphaBound out;
  for (const auto& lam : lambdas) {
    if (lam.real() > 0.0)
      throw ValueError("alpha_bound: rate with positive real part is outside the hypothesis");
    const double lre = -lam.real();  // lambda_real >= 0
    const double mag2 = std::norm(lam);
    if (mag2 == 0.0) continue;  // lambda = 0 contributes 0
    if (lre == 0.0) {
      out.unbounded = true;  // purely imaginary: no finite alpha works
      continue;
    }
    out.value = std::max(out.value, mag2 / (2.0 * lre) - 1.0 / h);
  }
  if (out.value < 0.0) out.value = 0.0;
  return out;
}

StabilityReport stability_grid(double re0, double re1, double im0, double im1, int n, double h,
                               double alpha) {
  if (n <= 0) throw ValueError("stability_grid: empty grid");
  if (re0 > re1 || im0 > im1) throw ValueError("stability_grid: empty range");
  StabilityReport rep;
  rep.h = h;
  rep.alpha = alpha;
  rep.grid.reserve(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    const double re = n == 1 ? re0 : re0 + (re1 - re0) * i / (n - 1);
    for (int j = 0; j < n; ++j) {
      const double im = n == 1 ? im0 : im0 + (im1 - im0) * j / (n - 1);
      StabilityGridPoint p;
      p.re = re;
      p.im = im;
      const std::complex<double> lam(re, im);
      p.factor_fe = magnification_forward_euler(lam, h);
      p.factor_imex = magnification_imex(lam, h, alpha);
      rep.grid.push_back(p);
    }
  }
  return rep;
}

template <class T>
PerturbationReport perturbation_probe(const NetworkSpec& spec, const ParamStore<T>& store,
                                      const Tensor4<T>& x, double delta_scale, uint64_t seed,
                                      int n_trials) {
  if (delta_scale < 0.0) throw ValueError("perturbation_probe: delta_scale must be >= 0");
  if (n_trials <= 0) throw ValueError("perturbation_probe: n_trials must be positive");

  ForwardTrace<T> base = forward_trace(spec, store, x);
  PerturbationReport rep;
  rep.layer_names = base.names;
  rep.ratios.assign(base.names.size(), 0.0);

  const double xnorm = tensor_norm2(x);
  Rng rng(seed);
  for (int trial = 0; trial < n_trials; ++trial) {
    Tensor4<T> delta(x.b, x.c, x.h, x.w);
    for (auto& e : delta.v) e = static_cast<T>(rng.gaussian_clt());
    const double dn = tensor_norm2(delta);
    const double target = delta_scale * xnorm;
    if (target == 0.0 || dn == 0.0) {
      // zero perturbation guard: the reference ratio is 1
      for (auto& r : rep.ratios) r += 1.0;
      continue;
    }
    kern::table<T>().scale(static_cast<T>(target / dn), delta.data(), delta.data(),
                           delta.size());
    Tensor4<T> xp = add(x, delta);
    ForwardTrace<T> pert = forward_trace(spec, store, xp);
    const double d0 = tensor_norm2(delta);
    for (size_t li = 0; li < base.features.size(); ++li)
      rep.ratios[li] += tensor_norm2(sub(pert.features[li], base.features[li])) / d0;
  }
  for (auto& r : rep.ratios) r /= n_trials;
  return rep;
}

template PerturbationReport perturbation_probe<float>(const NetworkSpec&,
                                                      const ParamStore<float>&,
                                                      const Tensor4<float>&, double, uint64_t,
                                                      int);
template PerturbationReport perturbation_probe<double>(const NetworkSpec&,
                                                       const ParamStore<double>&,
                                                       const Tensor4<double>&, double, uint64_t,
                                                       int);

}  // namespace imex
