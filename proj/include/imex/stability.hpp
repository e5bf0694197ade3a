#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "imex/layers.hpp"

// Scalar model-problem analysis: per-step magnification factors of the
// forward-Euler and IMEX schemes, the alpha bound that guarantees
// |magnification| <= 1, and an empirical perturbation probe on networks.

namespace imex {

/// |1 + h*lambda| for dY/dt = lambda * Y under forward Euler.
double magnification_forward_euler(std::complex<double> lambda, double h);

/// |(1 + h*lambda + h*alpha) / (1 + h*alpha)| for the IMEX scheme with
/// shift L = alpha * I.
double magnification_imex(std::complex<double> lambda, double h, double alpha);

/// Smallest alpha with magnification <= 1 for every supplied rate. A rate
/// on the imaginary axis (other than zero) admits no finite alpha; that is
/// reported explicitly rather than as an error.
struct AlphaBound {
  bool unbounded = false;
  double value = 0.0;
};

AlphaBound alpha_bound(std::span<const std::complex<double>> lambdas, double h);

struct StabilityGridPoint {
  double re = 0.0, im = 0.0;
  double factor_fe = 0.0, factor_imex = 0.0;
};

struct StabilityReport {
  std::vector<StabilityGridPoint> grid;
  double h = 1.0;
  double alpha = 0.0;
  bool alpha_unbounded = false;  // set when alpha came from an unbounded fit
};

/// Evaluates both factors on an n-by-n grid over [re0,re1] x [im0,im1].
StabilityReport stability_grid(double re0, double re1, double im0, double im1, int n, double h,
                               double alpha);

struct PerturbationReport {
  std::vector<std::string> layer_names;
  std::vector<double> ratios;  // ||dY_j|| / ||dY_0||, averaged over trials
};

/// Feeds x and x + delta (seeded Gaussian-by-CLT noise scaled to
/// ||delta|| = delta_scale * ||x||) and reports per-layer perturbation
/// growth. delta_scale == 0 is the documented guard: all ratios are 1.
template <class T>
PerturbationReport perturbation_probe(const NetworkSpec& spec, const ParamStore<T>& store,
                                      const Tensor4<T>& x, double delta_scale, uint64_t seed,
                                      int n_trials);

}  // namespace imex
