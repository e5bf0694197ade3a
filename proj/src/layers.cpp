#include "imex/layers.hpp"

#include <cmath>

#include "imex/fft.hpp"

namespace imex {

const char* to_string(StepMode m) {
  switch (m) {
    case StepMode::Explicit: return "explicit";
    case StepMode::Imex: return "imex";
    case StepMode::Dr: return "dr";
  }
  return "?";
}

const char* to_string(InitKind k) {
  return k == InitKind::Scaled ? "scaled" : "paper";
}

StepMode step_mode_from_string(const std::string& s) {
  if (s == "explicit") return StepMode::Explicit;
  if (s == "imex") return StepMode::Imex;
  if (s == "dr") return StepMode::Dr;
  throw ValueError("unknown step mode '" + s + "' (expected explicit, imex, or dr)");
}

InitKind init_kind_from_string(const std::string& s) {
  if (s == "scaled") return InitKind::Scaled;
  if (s == "paper") return InitKind::PaperUniform;
  throw ValueError("unknown init kind '" + s + "' (expected scaled or paper)");
}

void validate_network(const NetworkSpec& spec) {
  require(spec.input_channels > 0, "network: input_channels must be positive");
  require(spec.n_classes >= 0, "network: n_classes must be non-negative");
  require(spec.opening_kernel == 1 || spec.opening_kernel == 3,
          "network: opening kernel must be 1 or 3");
  require(!spec.stages.empty(), "network: at least one stage required");
  for (const auto& st : spec.stages) {
    require(st.width > 0, "network: stage width must be positive");
    require(st.layers >= 0, "network: stage layer count must be non-negative");
    require(st.h > 0.0, "network: step size h must be positive");
    require_odd_kernel(st.kernel, st.kernel);
  }
}

template <class T>
int ParamStore<T>::index_of(const std::string& name) const {
  for (size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return static_cast<int>(i);
  throw ValueError("unknown parameter '" + name + "'");
}

template <class T>
size_t ParamStore<T>::total_count() const {
  size_t n = 0;
  for (const auto& p : params) n += p.v.size();
  return n;
}

template <class T>
ParamStore<T> ParamStore<T>::zeros_like() const {
  ParamStore<T> out;
  out.params.reserve(params.size());
  for (const auto& p : params) {
    Param<T> q;
    q.name = p.name;
    q.kind = p.kind;
    q.shape = p.shape;
    q.v.assign(p.v.size(), T(0));
    out.params.push_back(std::move(q));
  }
  return out;
}

namespace {

template <class T>
void push_param(ParamStore<T>& store, const std::string& name, ParamKind kind,
                std::array<int, 4> shape) {
  Param<T> p;
  p.name = name;
  p.kind = kind;
  p.shape = shape;
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  p.v.assign(n, T(0));
  store.params.push_back(std::move(p));
}

std::string stage_prefix(int s) { return "stage" + std::to_string(s + 1); }
std::string layer_prefix(int s, int j) {
  return stage_prefix(s) + ".layer" + std::to_string(j + 1);
}

}  // namespace

template <class T>
ParamStore<T> build_param_store(const NetworkSpec& spec) {
  validate_network(spec);
  ParamStore<T> store;
  const int ok = spec.opening_kernel;
  push_param(store, "opening.K", ParamKind::conv,
             {spec.stages[0].width, spec.input_channels, ok, ok});
  int prev_width = spec.stages[0].width;
  for (size_t s = 0; s < spec.stages.size(); ++s) {
    const auto& st = spec.stages[s];
    if (s > 0 && st.width != prev_width)
      push_param(store, stage_prefix(static_cast<int>(s)) + ".proj.K", ParamKind::conv,
                 {st.width, prev_width, 1, 1});
    for (int j = 0; j < st.layers; ++j) {
      const std::string lp = layer_prefix(static_cast<int>(s), j);
      push_param(store, lp + ".K1", ParamKind::conv, {st.width, st.width, st.kernel, st.kernel});
      push_param(store, lp + ".gamma", ParamKind::gamma, {1, st.width, 1, 1});
      push_param(store, lp + ".beta", ParamKind::beta, {1, st.width, 1, 1});
      push_param(store, lp + ".K2", ParamKind::conv, {st.width, st.width, st.kernel, st.kernel});
      if (st.mode != StepMode::Explicit)
        push_param(store, lp + ".B", ParamKind::group, {st.width, 1, st.kernel, st.kernel});
    }
    prev_width = st.width;
  }
  if (spec.n_classes > 0) {
    push_param(store, "classifier.K", ParamKind::conv, {spec.n_classes, prev_width, 1, 1});
    push_param(store, "classifier.bias", ParamKind::bias, {1, spec.n_classes, 1, 1});
  }
  return store;
}

template <class T>
void init_params(const NetworkSpec& spec, ParamStore<T>& store, InitKind kind, Rng& rng) {
  (void)spec;
  for (auto& p : store.params) {
    switch (p.kind) {
      case ParamKind::conv: {
        if (kind == InitKind::PaperUniform) {
          fill_uniform(p.v, rng, 0.0, 1.0);
        } else {
          const double fan_in = static_cast<double>(p.shape[1]) * p.shape[2] * p.shape[3];
          const double a = std::sqrt(1.0 / fan_in);
          fill_uniform(p.v, rng, -a, a);
        }
        break;
      }
      case ParamKind::group: {
        // Laplacian factor stencil centered in the (possibly larger) tap grid
        const int c = p.shape[0], kh = p.shape[2], kw = p.shape[3];
        auto factor = laplacian_factor_kernel<T>(1);
        std::fill(p.v.begin(), p.v.end(), T(0));
        const int oy = (kh - 3) / 2, ox = (kw - 3) / 2;
        for (int ci = 0; ci < c; ++ci)
          for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x)
              p.v[(static_cast<size_t>(ci) * kh + oy + y) * kw + ox + x] = factor.at(0, y, x);
        break;
      }
      case ParamKind::gamma:
        std::fill(p.v.begin(), p.v.end(), T(1));
        break;
      case ParamKind::beta:
      case ParamKind::bias:
        std::fill(p.v.begin(), p.v.end(), T(0));
        break;
    }
  }
}

template <class T>
void init_params(const NetworkSpec& spec, ParamStore<T>& store, InitKind kind, uint64_t seed) {
  Rng rng(seed);
  init_params(spec, store, kind, rng);
}

size_t param_count(const NetworkSpec& spec) {
  return build_param_store<float>(spec).total_count();
}

template <class T>
ConvKernel<T> as_conv(const Param<T>& p) {
  ConvKernel<T> k(p.shape[0], p.shape[1], p.shape[2], p.shape[3]);
  k.v = p.v;
  return k;
}

template <class T>
GroupKernel<T> as_group(const Param<T>& p) {
  GroupKernel<T> k(p.shape[0], p.shape[2], p.shape[3]);
  k.v = p.v;
  return k;
}

template <class T>
LayerParams<T> layer_params_at(const NetworkSpec& spec, const ParamStore<T>& store, int s,
                               int j) {
  const std::string lp = layer_prefix(s, j);
  LayerParams<T> out;
  out.k1 = as_conv(store.at(lp + ".K1"));
  out.k2 = as_conv(store.at(lp + ".K2"));
  out.norm.gamma = store.at(lp + ".gamma").v;
  out.norm.beta = store.at(lp + ".beta").v;
  out.norm.eps = static_cast<T>(kNormEps);
  if (spec.stages[s].mode != StepMode::Explicit) out.b = as_group(store.at(lp + ".B"));
  out.use_norm = spec.use_norm;
  return out;
}

template <class T>
Tensor4<T> layer_f(const Tensor4<T>& y, const LayerParams<T>& p) {
  Tensor4<T> a = conv2d_periodic(y, p.k1);
  if (p.use_norm) a = instance_norm(a, p.norm);
  return conv2d_periodic(relu(a), p.k2);
}

template <class T>
Tensor4<T> resnet_step(const Tensor4<T>& y, const LayerParams<T>& p, T h) {
  Tensor4<T> f = layer_f(y, p);
  const auto& K = kern::table<T>();
  K.scale(h, f.data(), f.data(), f.size());
  K.add(y.data(), f.data(), f.data(), y.size());
  return f;
}

template <class T>
Tensor4<T> imex_step(const Tensor4<T>& y, const LayerParams<T>& p, T h) {
  if (!p.has_b()) throw ValueError("imex_step: implicit kernel B is missing");
  Tensor4<T> f = layer_f(y, p);
  const auto& K = kern::table<T>();
  K.scale(h, f.data(), f.data(), f.size());
  Tensor4<T> solved = solve_group_implicit(f, p.b, h);
  K.add(y.data(), solved.data(), solved.data(), y.size());
  return solved;
}

template <class T>
Tensor4<T> dr_step(const Tensor4<T>& y, const LayerParams<T>& p, T h) {
  if (!p.has_b()) throw ValueError("dr_step: implicit kernel B is missing");
  Tensor4<T> f = layer_f(y, p);
  const auto& K = kern::table<T>();
  K.scale(h, f.data(), f.data(), f.size());
  K.add(y.data(), f.data(), f.data(), y.size());
  return solve_group_implicit(f, p.b, h);
}

namespace {

template <class T>
Tensor4<T> run_forward(const NetworkSpec& spec, const ParamStore<T>& store, const Tensor4<T>& x,
                       ForwardTrace<T>* trace) {
  validate_network(spec);
  require(x.c == spec.input_channels, "forward: input has " + std::to_string(x.c) +
                                          " channels, spec expects " +
                                          std::to_string(spec.input_channels));
  require(is_power_of_two(x.h) && is_power_of_two(x.w),
          "forward: spatial dims must be powers of two, got " + std::to_string(x.h) + "x" +
              std::to_string(x.w));
  Tensor4<T> y = conv2d_periodic(x, as_conv(store.at("opening.K")));
  if (trace) {
    trace->names.push_back("opening");
    trace->features.push_back(y);
  }
  int prev_width = spec.stages[0].width;
  for (size_t s = 0; s < spec.stages.size(); ++s) {
    const auto& st = spec.stages[s];
    if (s > 0 && st.width != prev_width)
      y = conv2d_periodic(y, as_conv(store.at(stage_prefix(static_cast<int>(s)) + ".proj.K")));
    for (int j = 0; j < st.layers; ++j) {
      const LayerParams<T> lp = layer_params_at(spec, store, static_cast<int>(s), j);
      const T h = static_cast<T>(st.h);
      switch (st.mode) {
        case StepMode::Explicit: y = resnet_step(y, lp, h); break;
        case StepMode::Imex: y = imex_step(y, lp, h); break;
        case StepMode::Dr: y = dr_step(y, lp, h); break;
      }
      if (trace) {
        trace->names.push_back(layer_prefix(static_cast<int>(s), j));
        trace->features.push_back(y);
      }
    }
    prev_width = st.width;
  }
  if (spec.n_classes > 0) {
    y = conv2d_periodic(y, as_conv(store.at("classifier.K")));
    y = bias_add_channel(y, store.at("classifier.bias").v);
    if (trace) {
      trace->names.push_back("classifier");
      trace->features.push_back(y);
    }
  }
  return y;
}

int wrap_chebyshev(int y, int x, int cy, int cx, int h, int w) {
  const int ady = std::abs(y - cy), adx = std::abs(x - cx);
  const int dy = std::min(ady, h - ady), dx = std::min(adx, w - adx);
  return std::max(dy, dx);
}

}  // namespace

template <class T>
Tensor4<T> forward(const NetworkSpec& spec, const ParamStore<T>& store, const Tensor4<T>& x) {
  return run_forward(spec, store, x, static_cast<ForwardTrace<T>*>(nullptr));
}

template <class T>
ForwardTrace<T> forward_trace(const NetworkSpec& spec, const ParamStore<T>& store,
                              const Tensor4<T>& x) {
  ForwardTrace<T> trace;
  run_forward(spec, store, x, &trace);
  return trace;
}

template <class T>
ProbeOutput<T> receptive_field_probe_full(const NetworkSpec& spec, const ParamStore<T>& store,
                                          int size, double eps) {
  require(eps > 0.0, "receptive_field_probe: eps must be positive");
  require(is_power_of_two(size), "receptive_field_probe: size must be a power of two");
  Tensor4<T> delta(1, spec.input_channels, size, size);
  const int cy = size / 2, cx = size / 2;
  delta.at(0, 0, cy, cx) = T(1);
  Tensor4<T> zero(1, spec.input_channels, size, size);

  ForwardTrace<T> td = forward_trace(spec, store, delta);
  ForwardTrace<T> tz = forward_trace(spec, store, zero);

  ProbeOutput<T> out;
  for (size_t li = 0; li < td.features.size(); ++li) {
    const Tensor4<T>& a = td.features[li];
    const Tensor4<T>& b = tz.features[li];
    std::vector<T> map(static_cast<size_t>(size) * size, T(0));
    for (int ci = 0; ci < a.c; ++ci) {
      const T* pa = a.plane(0, ci);
      const T* pb = b.plane(0, ci);
      for (size_t i = 0; i < map.size(); ++i) {
        const T d = std::abs(pa[i] - pb[i]);
        if (d > map[i]) map[i] = d;
      }
    }
    LayerCoverage cov;
    cov.name = td.names[li];
    size_t covered = 0;
    int radius = 0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (static_cast<double>(map[static_cast<size_t>(y) * size + x]) > eps) {
          ++covered;
          radius = std::max(radius, wrap_chebyshev(y, x, cy, cx, size, size));
        }
    cov.coverage = static_cast<double>(covered) / static_cast<double>(map.size());
    cov.radius = radius;
    out.report.trace.push_back(cov);
    out.response_maps.push_back(std::move(map));
  }
  if (!out.report.trace.empty()) {
    out.report.coverage_fraction = out.report.trace.back().coverage;
    out.report.max_radius = out.report.trace.back().radius;
  }
  if (!td.features.empty()) out.final_response = sub(td.features.back(), tz.features.back());
  return out;
}

template <class T>
FieldOfViewReport receptive_field_probe(const NetworkSpec& spec, const ParamStore<T>& store,
                                        int size, double eps) {
  return receptive_field_probe_full(spec, store, size, eps).report;
}

NetworkSpec propagation_demo_spec(StepMode mode, int layers, double h) {
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.n_classes = 0;
  spec.opening_kernel = 1;
  spec.use_norm = false;
  spec.stages.push_back({kDemoWidth, layers, mode, h, 3});
  return spec;
}

template <class T>
ParamStore<T> propagation_demo_params(const NetworkSpec& spec, uint64_t seed) {
  ParamStore<T> store = build_param_store<T>(spec);
  init_params(spec, store, InitKind::Scaled, seed);
  // all-ones opening copies the input into every channel
  auto& opening = store.at("opening.K");
  std::fill(opening.v.begin(), opening.v.end(), T(1));
  return store;
}

#define IMEX_INSTANTIATE_LAYERS(T)                                                             \
  template struct ParamStore<T>;                                                               \
  template ParamStore<T> build_param_store<T>(const NetworkSpec&);                             \
  template void init_params<T>(const NetworkSpec&, ParamStore<T>&, InitKind, Rng&);            \
  template void init_params<T>(const NetworkSpec&, ParamStore<T>&, InitKind, uint64_t);        \
  template ConvKernel<T> as_conv<T>(const Param<T>&);                                          \
  template GroupKernel<T> as_group<T>(const Param<T>&);                                        \
  template LayerParams<T> layer_params_at<T>(const NetworkSpec&, const ParamStore<T>&, int,    \
                                             int);                                             \
  template Tensor4<T> layer_f<T>(const Tensor4<T>&, const LayerParams<T>&);                    \
  template Tensor4<T> resnet_step<T>(const Tensor4<T>&, const LayerParams<T>&, T);             \
  template Tensor4<T> imex_step<T>(const Tensor4<T>&, const LayerParams<T>&, T);               \
  template Tensor4<T> dr_step<T>(const Tensor4<T>&, const LayerParams<T>&, T);                 \
  template Tensor4<T> forward<T>(const NetworkSpec&, const ParamStore<T>&, const Tensor4<T>&); \
  template ForwardTrace<T> forward_trace<T>(const NetworkSpec&, const ParamStore<T>&,          \
                                            const Tensor4<T>&);                               \
  template ProbeOutput<T> receptive_field_probe_full<T>(const NetworkSpec&,                    \
                                                        const ParamStore<T>&, int, double);   \
  template FieldOfViewReport receptive_field_probe<T>(const NetworkSpec&,                      \
                                                      const ParamStore<T>&, int, double);     \
  template ParamStore<T> propagation_demo_params<T>(const NetworkSpec&, uint64_t);

IMEX_INSTANTIATE_LAYERS(float)
IMEX_INSTANTIATE_LAYERS(double)

#undef IMEX_INSTANTIATE_LAYERS

}  // namespace imex
