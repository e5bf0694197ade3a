#include "imex/autodiff.hpp"

#include <cmath>

#include "imex/fft.hpp"
#include "imex/spectral.hpp"

namespace imex {

template <class T>
double weighted_cross_entropy(const Tensor4<T>& logits, const std::vector<uint8_t>& labels,
                              const std::vector<T>& class_weights) {
  const int classes = logits.c;
  require(static_cast<int>(class_weights.size()) == classes,
          "weighted_cross_entropy: weight count != class count");
  for (T w : class_weights) require(w > T(0), "weighted_cross_entropy: weights must be positive");
  const size_t pixels = static_cast<size_t>(logits.b) * logits.h * logits.w;
  require(labels.size() == pixels, "weighted_cross_entropy: label count mismatch");

  const size_t plane = logits.plane_size();
  double num = 0.0, den = 0.0;
  for (int bi = 0; bi < logits.b; ++bi) {
    const T* base = logits.plane(bi, 0);
    for (size_t p = 0; p < plane; ++p) {
      const uint8_t label = labels[static_cast<size_t>(bi) * plane + p];
      if (label >= classes)
        throw ValueError("weighted_cross_entropy: label " + std::to_string(label) +
                         " out of range for " + std::to_string(classes) + " classes");
      double mx = -1e300;
      for (int k = 0; k < classes; ++k)
        mx = std::max(mx, static_cast<double>(base[static_cast<size_t>(k) * plane + p]));
      double se = 0.0;
      for (int k = 0; k < classes; ++k)
        se += std::exp(static_cast<double>(base[static_cast<size_t>(k) * plane + p]) - mx);
      const double lse = mx + std::log(se);
      const double w = static_cast<double>(class_weights[label]);
      num += w * (lse - static_cast<double>(base[static_cast<size_t>(label) * plane + p]));
      den += w;
    }
  }
  return num / den;
}

template <class T>
Tensor4<T> weighted_cross_entropy_grad(const Tensor4<T>& logits,
                                       const std::vector<uint8_t>& labels,
                                       const std::vector<T>& class_weights) {
  const int classes = logits.c;
  const size_t plane = logits.plane_size();
  Tensor4<T> grad(logits.b, logits.c, logits.h, logits.w);
  double den = 0.0;
  for (uint8_t l : labels) den += static_cast<double>(class_weights[l]);
  for (int bi = 0; bi < logits.b; ++bi) {
    const T* base = logits.plane(bi, 0);
    T* gbase = grad.plane(bi, 0);
    for (size_t p = 0; p < plane; ++p) {
      const uint8_t label = labels[static_cast<size_t>(bi) * plane + p];
      double mx = -1e300;
      for (int k = 0; k < classes; ++k)
        mx = std::max(mx, static_cast<double>(base[static_cast<size_t>(k) * plane + p]));
      double se = 0.0;
      for (int k = 0; k < classes; ++k)
        se += std::exp(static_cast<double>(base[static_cast<size_t>(k) * plane + p]) - mx);
      const double w = static_cast<double>(class_weights[label]) / den;
      for (int k = 0; k < classes; ++k) {
        const double soft =
            std::exp(static_cast<double>(base[static_cast<size_t>(k) * plane + p]) - mx) / se;
        gbase[static_cast<size_t>(k) * plane + p] =
            static_cast<T>(w * (soft - (k == label ? 1.0 : 0.0)));
      }
    }
  }
  return grad;
}

template <class T>
Tape<T>::Tape(const ParamStore<T>* params) : params_(params), grads_(params->zeros_like()) {}

template <class T>
const Tensor4<T>& Tape<T>::value(int id) const {
  return nodes_[static_cast<size_t>(id)].out;
}

template <class T>
Tensor4<T> Tape<T>::eval_node(const Node& n, bool save_aux, Node* dst) const {
  const Tensor4<T>& A = n.a >= 0 ? nodes_[n.a].out : n.out;
  switch (n.op) {
    case Op::leaf:
      return n.out;
    case Op::conv:
      return conv2d_periodic(A, as_conv(params_->params[n.p0]));
    case Op::bias:
      return bias_add_channel(A, params_->params[n.p0].v);
    case Op::norm: {
      NormParams<T> np;
      np.gamma = params_->params[n.p0].v;
      np.beta = params_->params[n.p1].v;
      np.eps = n.s;
      std::vector<T> mean, inv;
      Tensor4<T> out = instance_norm_stats(A, np, mean, inv);
      if (save_aux && dst) {
        dst->mean = std::move(mean);
        dst->inv = std::move(inv);
      }
      return out;
    }
    case Op::relu:
      return imex::relu(A);
    case Op::add:
      return imex::add(A, nodes_[n.b].out);
    case Op::scale:
      return imex::scale(A, n.s);
    case Op::solve: {
      std::vector<T> mult =
          group_multiplier(as_group(params_->params[n.p0]), n.s, A.h, A.w);
      Tensor4<T> out = apply_spectral_multiplier(A, mult);
      if (save_aux && dst) dst->mult = std::move(mult);
      return out;
    }
  }
  throw ValueError("tape: unknown op");
}

template <class T>
int Tape<T>::leaf(Tensor4<T> x) {
  Node n;
  n.op = Op::leaf;
  n.out = std::move(x);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

namespace {
template <class T>
void check_param_kind(const ParamStore<T>& store, int idx, ParamKind kind, const char* what) {
  require(idx >= 0 && idx < static_cast<int>(store.params.size()),
          std::string(what) + ": parameter index out of range");
  require(store.params[idx].kind == kind, std::string(what) + ": wrong parameter kind for '" +
                                              store.params[idx].name + "'");
}
}  // namespace

template <class T>
int Tape<T>::conv2d(int x, int kernel_param) {
  check_param_kind(*params_, kernel_param, ParamKind::conv, "tape conv2d");
  Node n;
  n.op = Op::conv;
  n.a = x;
  n.p0 = kernel_param;
  n.out = eval_node(n, false, nullptr);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <class T>
int Tape<T>::bias_add(int x, int bias_param) {
  check_param_kind(*params_, bias_param, ParamKind::bias, "tape bias_add");
  Node n;
  n.op = Op::bias;
  n.a = x;
  n.p0 = bias_param;
  n.out = eval_node(n, false, nullptr);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <class T>
int Tape<T>::instance_norm(int x, int gamma_param, int beta_param, T eps) {
  check_param_kind(*params_, gamma_param, ParamKind::gamma, "tape instance_norm");
  check_param_kind(*params_, beta_param, ParamKind::beta, "tape instance_norm");
  Node n;
  n.op = Op::norm;
  n.a = x;
  n.p0 = gamma_param;
  n.p1 = beta_param;
  n.s = eps;
  n.out = eval_node(n, true, &n);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <class T>
int Tape<T>::relu(int x) {
  Node n;
  n.op = Op::relu;
  n.a = x;
  n.out = eval_node(n, false, nullptr);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <class T>
int Tape<T>::add(int a, int b) {
  Node n;
  n.op = Op::add;
  n.a = a;
  n.b = b;
  n.out = eval_node(n, false, nullptr);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <class T>
int Tape<T>::scale(int x, T s) {
  Node n;
  n.op = Op::scale;
  n.a = x;
  n.s = s;
  n.out = eval_node(n, false, nullptr);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <class T>
int Tape<T>::solve_implicit(int x, int group_param, T h) {
  check_param_kind(*params_, group_param, ParamKind::group, "tape solve_implicit");
  if (h < T(0)) throw ValueError("tape solve_implicit: negative step size");
  Node n;
  n.op = Op::solve;
  n.a = x;
  n.p0 = group_param;
  n.s = h;
  n.out = eval_node(n, true, &n);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <class T>
void Tape<T>::set_root(int id) {
  require(root_ < 0, "tape: a root is already set");
  require(id >= 0 && id < static_cast<int>(nodes_.size()), "tape: bad root id");
  root_ = id;
}

template <class T>
T Tape<T>::sum_root(int x) {
  set_root(x);
  root_kind_ = RootKind::sum;
  return static_cast<T>(kern::table<T>().sum(value(x).data(), value(x).size()));
}

template <class T>
T Tape<T>::dot_root(int x, const Tensor4<T>& cotangent) {
  require(cotangent.same_shape(value(x)), "tape dot_root: cotangent shape mismatch");
  set_root(x);
  root_kind_ = RootKind::dot;
  root_cotangent_ = cotangent;
  return static_cast<T>(tensor_dot(value(x), cotangent));
}

template <class T>
T Tape<T>::weighted_ce_root(int logits, const std::vector<uint8_t>& labels,
                            const std::vector<T>& class_weights) {
  set_root(logits);
  root_kind_ = RootKind::wce;
  root_labels_ = labels;
  root_weights_ = class_weights;
  return static_cast<T>(weighted_cross_entropy(value(logits), labels, class_weights));
}

template <class T>
void Tape<T>::accumulate(int id, const Tensor4<T>& g) {
  Tensor4<T>& slot = node_grads_[static_cast<size_t>(id)];
  if (slot.size() == 0)
    slot = g;
  else
    kern::table<T>().add(slot.data(), g.data(), slot.data(), slot.size());
}

template <class T>
void Tape<T>::backward() {
  require(root_ >= 0, "tape backward: no scalar root set");
  node_grads_.assign(nodes_.size(), Tensor4<T>());
  const auto& K = kern::table<T>();

  // seed the root cotangent
  switch (root_kind_) {
    case RootKind::sum: {
      Tensor4<T> ones(value(root_).b, value(root_).c, value(root_).h, value(root_).w);
      std::fill(ones.v.begin(), ones.v.end(), T(1));
      node_grads_[root_] = std::move(ones);
      break;
    }
    case RootKind::dot:
      node_grads_[root_] = root_cotangent_;
      break;
    case RootKind::wce:
      node_grads_[root_] = weighted_cross_entropy_grad(value(root_), root_labels_, root_weights_);
      break;
    case RootKind::none:
      throw ValueError("tape backward: no root kind");
  }

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor4<T>& g = node_grads_[static_cast<size_t>(id)];
    if (g.size() == 0) continue;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::conv: {
        const auto kparam = as_conv(params_->params[n.p0]);
        accumulate(n.a, conv2d_adjoint_periodic(g, kparam));
        const ConvKernel<T> dk = conv2d_kernel_grad(nodes_[n.a].out, g, kparam.kh, kparam.kw);
        K.axpy(T(1), dk.v.data(), grads_.params[n.p0].v.data(), dk.v.size());
        break;
      }
      case Op::bias: {
        accumulate(n.a, g);
        auto& db = grads_.params[n.p0].v;
        for (int ci = 0; ci < g.c; ++ci) {
          double acc = 0.0;
          for (int bi = 0; bi < g.b; ++bi) acc += K.sum(g.plane(bi, ci), g.plane_size());
          db[ci] += static_cast<T>(acc);
        }
        break;
      }
      case Op::norm: {
        const Tensor4<T>& x = nodes_[n.a].out;
        const auto& gamma = params_->params[n.p0].v;
        auto& dgamma = grads_.params[n.p0].v;
        auto& dbeta = grads_.params[n.p1].v;
        const size_t plane = x.plane_size();
        Tensor4<T> gx(x.b, x.c, x.h, x.w);
        std::vector<T> xhat(plane);
        for (int bi = 0; bi < x.b; ++bi)
          for (int ci = 0; ci < x.c; ++ci) {
            const size_t stat = static_cast<size_t>(bi) * x.c + ci;
            const T mean = n.mean[stat], inv = n.inv[stat];
            const T* xp = x.plane(bi, ci);
            const T* gp = g.plane(bi, ci);
            // xhat = (x - mean) * inv
            K.affine(T(1), -mean, xp, xhat.data(), plane);
            K.scale(inv, xhat.data(), xhat.data(), plane);
            const double gsum = K.sum(gp, plane);
            const double gxdot = K.dot(gp, xhat.data(), plane);
            dbeta[ci] += static_cast<T>(gsum);
            dgamma[ci] += static_cast<T>(gxdot);
            const T ginv = gamma[ci] * inv;
            T* dst = gx.plane(bi, ci);
            // dx = ginv * (g - gsum/n - xhat * gxdot/n)
            K.affine(ginv, static_cast<T>(-ginv * gsum / static_cast<double>(plane)), gp, dst,
                     plane);
            K.axpy(static_cast<T>(-ginv * gxdot / static_cast<double>(plane)), xhat.data(), dst,
                   plane);
          }
        accumulate(n.a, gx);
        break;
      }
      case Op::relu: {
        Tensor4<T> gx(g.b, g.c, g.h, g.w);
        K.relu_mask(nodes_[n.a].out.data(), g.data(), gx.data(), g.size());
        accumulate(n.a, gx);
        break;
      }
      case Op::add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::scale: {
        Tensor4<T> gx(g.b, g.c, g.h, g.w);
        K.scale(n.s, g.data(), gx.data(), g.size());
        accumulate(n.a, gx);
        break;
      }
      case Op::solve: {
        const Tensor4<T>& x = nodes_[n.a].out;
        const T h = n.s;
        const int height = x.h, width = x.w;
        const size_t plane = x.plane_size();
        Tensor4<T> gx(x.b, x.c, height, width);
        // d loss / d t(w), accumulated over the batch per channel
        std::vector<double> dldt(static_cast<size_t>(x.c) * plane, 0.0);
        std::vector<std::complex<T>> gbuf(plane), xbuf(plane);
        for (int bi = 0; bi < x.b; ++bi)
          for (int ci = 0; ci < x.c; ++ci) {
            const T* gp = g.plane(bi, ci);
            const T* xp = x.plane(bi, ci);
            for (size_t i = 0; i < plane; ++i) {
              gbuf[i] = gp[i];
              xbuf[i] = xp[i];
            }
            fft2d_forward(gbuf.data(), height, width);
            fft2d_forward(xbuf.data(), height, width);
            double* acc = dldt.data() + static_cast<size_t>(ci) * plane;
            for (size_t i = 0; i < plane; ++i)
              acc[i] += static_cast<double>(gbuf[i].real()) * xbuf[i].real() +
                        static_cast<double>(gbuf[i].imag()) * xbuf[i].imag();
            // input gradient: the solve is self-adjoint (real multiplier)
            K.cmul_real(gbuf.data(), n.mult.data() + static_cast<size_t>(ci) * plane, plane);
            fft2d_inverse(gbuf.data(), height, width);
            T* dst = gx.plane(bi, ci);
            for (size_t i = 0; i < plane; ++i) dst[i] = gbuf[i].real();
          }
        accumulate(n.a, gx);

        // kernel gradient via the multiplier chain rule:
        // dL/dS = -h t^2 dL/dt, spectral cotangent 2 (dL/dS) conj(Bhat),
        // then the adjoint of (fft o embed): forward transform + corner
        // gather. dL/dt carries the 1/(h*w) of this FFT convention.
        const GroupKernel<T> bk = as_group(params_->params[n.p0]);
        const Symbol<T> bhat = symbol(embed_kernel(bk, height, width));
        KernelPlane<T> dplane(x.c, height, width);
        std::vector<std::complex<T>> zbuf(plane);
        const double invn = 1.0 / static_cast<double>(plane);
        for (int ci = 0; ci < x.c; ++ci) {
          const T* t = n.mult.data() + static_cast<size_t>(ci) * plane;
          const double* acc = dldt.data() + static_cast<size_t>(ci) * plane;
          const std::complex<T>* bh = bhat.channel(ci);
          for (size_t i = 0; i < plane; ++i) {
            const double r = -static_cast<double>(h) * static_cast<double>(t[i]) *
                             static_cast<double>(t[i]) * acc[i] * invn;
            // spectral cotangent 2 r conj(Bhat); its forward transform is the
            // plane cotangent (adjoint of fft o embed, up to the corner gather)
            zbuf[i] = std::complex<T>(static_cast<T>(2.0 * r * bh[i].real()),
                                      static_cast<T>(-2.0 * r * bh[i].imag()));
          }
          fft2d_forward(zbuf.data(), height, width);
          T* dp = dplane.channel(ci);
          for (size_t i = 0; i < plane; ++i) dp[i] = zbuf[i].real();
        }
        const GroupKernel<T> db = gather_kernel(dplane, bk.kh, bk.kw);
        K.axpy(T(1), db.v.data(), grads_.params[n.p0].v.data(), db.v.size());
        break;
      }
    }
  }

  for (const auto& p : grads_.params)
    for (T v : p.v)
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError("non-finite gradient for parameter '" + p.name + "'");
}

template <class T>
const Tensor4<T>& Tape<T>::input_grad(int leaf_id) const {
  require(leaf_id >= 0 && leaf_id < static_cast<int>(nodes_.size()) &&
              nodes_[leaf_id].op == Op::leaf,
          "tape input_grad: not a leaf");
  require(!node_grads_.empty(), "tape input_grad: run backward() first");
  return node_grads_[static_cast<size_t>(leaf_id)];
}

template <class T>
double Tape<T>::replay_max_diff() const {
  std::vector<Tensor4<T>> replayed(nodes_.size());
  double worst = 0.0;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    Node probe = nodes_[i];
    if (probe.op == Op::leaf) {
      replayed[i] = probe.out;
      continue;
    }
    // evaluate against replayed inputs
    Node shadow = probe;
    shadow.out = Tensor4<T>();
    Tape<T>& self = const_cast<Tape<T>&>(*this);
    Tensor4<T> saved_a, saved_b;
    if (probe.a >= 0) {
      saved_a = self.nodes_[probe.a].out;
      self.nodes_[probe.a].out = replayed[probe.a];
    }
    if (probe.b >= 0) {
      saved_b = self.nodes_[probe.b].out;
      self.nodes_[probe.b].out = replayed[probe.b];
    }
    replayed[i] = eval_node(probe, false, nullptr);
    if (probe.a >= 0) self.nodes_[probe.a].out = std::move(saved_a);
    if (probe.b >= 0) self.nodes_[probe.b].out = std::move(saved_b);
    for (size_t k = 0; k < replayed[i].v.size(); ++k)
      worst = std::max(worst, std::abs(static_cast<double>(replayed[i].v[k]) -
                                       static_cast<double>(nodes_[i].out.v[k])));
  }
  return worst;
}

template <class T>
int taped_forward(Tape<T>& tape, const NetworkSpec& spec, const ParamStore<T>& store,
                  int input_leaf) {
  validate_network(spec);
  int y = tape.conv2d(input_leaf, store.index_of("opening.K"));
  int prev_width = spec.stages[0].width;
  for (size_t s = 0; s < spec.stages.size(); ++s) {
    const auto& st = spec.stages[s];
    if (s > 0 && st.width != prev_width)
      y = tape.conv2d(y, store.index_of("stage" + std::to_string(s + 1) + ".proj.K"));
    for (int j = 0; j < st.layers; ++j) {
      const std::string lp =
          "stage" + std::to_string(s + 1) + ".layer" + std::to_string(j + 1);
      int f = tape.conv2d(y, store.index_of(lp + ".K1"));
      if (spec.use_norm)
        f = tape.instance_norm(f, store.index_of(lp + ".gamma"), store.index_of(lp + ".beta"),
                               static_cast<T>(kNormEps));
      f = tape.relu(f);
      f = tape.conv2d(f, store.index_of(lp + ".K2"));
      f = tape.scale(f, static_cast<T>(st.h));
      switch (st.mode) {
        case StepMode::Explicit:
          y = tape.add(y, f);
          break;
        case StepMode::Imex:
          y = tape.add(y, tape.solve_implicit(f, store.index_of(lp + ".B"),
                                              static_cast<T>(st.h)));
          break;
        case StepMode::Dr:
          y = tape.solve_implicit(tape.add(y, f), store.index_of(lp + ".B"),
                                  static_cast<T>(st.h));
          break;
      }
    }
    prev_width = st.width;
  }
  if (spec.n_classes > 0) {
    y = tape.conv2d(y, store.index_of("classifier.K"));
    y = tape.bias_add(y, store.index_of("classifier.bias"));
  }
  return y;
}

template class Tape<float>;
template class Tape<double>;
template int taped_forward<float>(Tape<float>&, const NetworkSpec&, const ParamStore<float>&,
                                  int);
template int taped_forward<double>(Tape<double>&, const NetworkSpec&, const ParamStore<double>&,
                                   int);
template double weighted_cross_entropy<float>(const Tensor4<float>&,
                                              const std::vector<uint8_t>&,
                                              const std::vector<float>&);
template double weighted_cross_entropy<double>(const Tensor4<double>&,
                                               const std::vector<uint8_t>&,
                                               const std::vector<double>&);
template Tensor4<float> weighted_cross_entropy_grad<float>(const Tensor4<float>&,
                                                           const std::vector<uint8_t>&,
                                                           const std::vector<float>&);
template Tensor4<double> weighted_cross_entropy_grad<double>(const Tensor4<double>&,
                                                             const std::vector<uint8_t>&,
                                                             const std::vector<double>&);

}  // namespace imex
