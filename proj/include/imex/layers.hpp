#pragma once

#include <array>
#include <string>
#include <vector>

#include "imex/ops.hpp"
#include "imex/spectral.hpp"

// The layer function f(Y) = K2 * relu(norm(K1 * Y)), the explicit / IMEX /
// diffusion-reaction step rules, staged networks, and the field-of-view
// probe.

namespace imex {

enum class StepMode { Explicit, Imex, Dr };

enum class InitKind {
  Scaled,        // uniform on +-sqrt(1/(cin*kh*kw))
  PaperUniform,  // uniform on [0, 1)
};

const char* to_string(StepMode m);
const char* to_string(InitKind k);
StepMode step_mode_from_string(const std::string& s);
InitKind init_kind_from_string(const std::string& s);

struct StageSpec {
  int width = 0;
  int layers = 0;
  StepMode mode = StepMode::Imex;
  double h = 1.0;
  int kernel = 3;

  bool operator==(const StageSpec&) const = default;
};

struct NetworkSpec {
  int input_channels = 1;
  int n_classes = 4;  // 0 means no classifier head (probe/demo networks)
  int opening_kernel = 3;
  bool use_norm = true;
  std::vector<StageSpec> stages;

  bool operator==(const NetworkSpec&) const = default;
};

void validate_network(const NetworkSpec& spec);

enum class ParamKind { conv, group, gamma, beta, bias };

/// One named parameter tensor. Shapes are rank-4 so every parameter
/// serializes as a TNSR block: conv (cout, cin, kh, kw), group kernels
/// (c, 1, kh, kw), per-channel vectors (1, c, 1, 1).
template <class T>
struct Param {
  std::string name;
  ParamKind kind = ParamKind::conv;
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<T> v;

  size_t size() const { return v.size(); }
};

/// Ordered named parameters; declaration order is deterministic from the
/// NetworkSpec and drives the checkpoint layout.
template <class T>
struct ParamStore {
  std::vector<Param<T>> params;

  int index_of(const std::string& name) const;
  Param<T>& at(const std::string& name) { return params[index_of(name)]; }
  const Param<T>& at(const std::string& name) const { return params[index_of(name)]; }
  size_t total_count() const;

  /// Same layout, all values zero (gradient accumulator).
  ParamStore<T> zeros_like() const;

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    out.params.reserve(params.size());
    for (const auto& p : params) {
      Param<U> q;
      q.name = p.name;
      q.kind = p.kind;
      q.shape = p.shape;
      q.v.assign(p.v.begin(), p.v.end());
      out.params.push_back(std::move(q));
    }
    return out;
  }
};

/// Builds the zero-valued parameter store for a network.
template <class T>
ParamStore<T> build_param_store(const NetworkSpec& spec);

/// Deterministic initialization; draws are consumed in declaration order.
/// Mixing kernels follow `kind`; implicit kernels start as the Laplacian
/// factor stencil; gamma = 1, beta = 0, biases = 0.
template <class T>
void init_params(const NetworkSpec& spec, ParamStore<T>& store, InitKind kind, Rng& rng);

template <class T>
void init_params(const NetworkSpec& spec, ParamStore<T>& store, InitKind kind, uint64_t seed);

size_t param_count(const NetworkSpec& spec);

/// Per-layer view used by the step rules.
template <class T>
struct LayerParams {
  ConvKernel<T> k1, k2;
  NormParams<T> norm;
  GroupKernel<T> b;  // empty (c == 0) in explicit mode
  bool use_norm = true;
  bool has_b() const { return b.c > 0; }
};

template <class T>
Tensor4<T> layer_f(const Tensor4<T>& y, const LayerParams<T>& p);

/// Forward-Euler residual step: Y + h f(Y).
template <class T>
Tensor4<T> resnet_step(const Tensor4<T>& y, const LayerParams<T>& p, T h);

/// Semi-implicit step (I + hL)^-1 (Y + hLY + h f(Y)), computed in the
/// algebraically identical form Y + (I + hL)^-1 (h f(Y)).
template <class T>
Tensor4<T> imex_step(const Tensor4<T>& y, const LayerParams<T>& p, T h);

/// Diffusion-reaction step (I + hL)^-1 (Y + h f(Y)).
template <class T>
Tensor4<T> dr_step(const Tensor4<T>& y, const LayerParams<T>& p, T h);

template <class T>
ConvKernel<T> as_conv(const Param<T>& p);
template <class T>
GroupKernel<T> as_group(const Param<T>& p);

/// Assembles the per-layer parameter view for stage `s`, layer `j` (0-based).
template <class T>
LayerParams<T> layer_params_at(const NetworkSpec& spec, const ParamStore<T>& store, int s, int j);

inline constexpr double kNormEps = 1e-5;

template <class T>
Tensor4<T> forward(const NetworkSpec& spec, const ParamStore<T>& store, const Tensor4<T>& x);

/// Features captured along the forward pass: after the opening convolution,
/// after every step, and after the classifier when present.
template <class T>
struct ForwardTrace {
  std::vector<std::string> names;
  std::vector<Tensor4<T>> features;
};

template <class T>
ForwardTrace<T> forward_trace(const NetworkSpec& spec, const ParamStore<T>& store,
                              const Tensor4<T>& x);

struct LayerCoverage {
  std::string name;
  double coverage = 0.0;
  int radius = 0;
};

struct FieldOfViewReport {
  double coverage_fraction = 0.0;  // of the final output
  int max_radius = 0;              // Chebyshev, wrap-aware
  std::vector<LayerCoverage> trace;
};

template <class T>
struct ProbeOutput {
  FieldOfViewReport report;
  // per trace entry: max |delta response| over channels, size*size each
  std::vector<std::vector<T>> response_maps;
  Tensor4<T> final_response;
};

/// Feeds a unit delta at the image center (channel 0) and reports where
/// |output - output_for_zero_input| exceeds eps, per layer and at the end.
template <class T>
ProbeOutput<T> receptive_field_probe_full(const NetworkSpec& spec, const ParamStore<T>& store,
                                          int size, double eps);

template <class T>
FieldOfViewReport receptive_field_probe(const NetworkSpec& spec, const ParamStore<T>& store,
                                        int size, double eps);

// Fixed-seed demo network for the propagation experiment: 1x1 all-ones
// opening into kDemoWidth channels, no normalization, no classifier.
inline constexpr uint64_t kDemoSeed = 0x5EED0F1E1D0FAEULL;
inline constexpr int kDemoWidth = 8;

NetworkSpec propagation_demo_spec(StepMode mode, int layers, double h);

template <class T>
ParamStore<T> propagation_demo_params(const NetworkSpec& spec, uint64_t seed = kDemoSeed);

}  // namespace imex
