#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "imex/layers.hpp"

// Minimal reverse-mode differentiation over the fixed primitive set used by
// the networks: convolution, instance norm, relu, add, scale, channel bias,
// and the implicit spectral solve (including its kernel gradient through
// the multiplier chain rule).

namespace imex {

template <class T>
class Tape {
 public:
  /// The tape reads parameters from `params`; gradients accumulate into a
  /// parallel zero-initialized store.
  explicit Tape(const ParamStore<T>* params);

  int leaf(Tensor4<T> x);
  int conv2d(int x, int kernel_param);
  int bias_add(int x, int bias_param);
  int instance_norm(int x, int gamma_param, int beta_param, T eps);
  int relu(int x);
  int add(int a, int b);
  int scale(int x, T s);
  int solve_implicit(int x, int group_param, T h);

  // Scalar roots; exactly one may be set per tape.
  T sum_root(int x);
  T dot_root(int x, const Tensor4<T>& cotangent);
  T weighted_ce_root(int logits, const std::vector<uint8_t>& labels,
                     const std::vector<T>& class_weights);

  const Tensor4<T>& value(int id) const;

  /// Reverse sweep from the root; throws NumericError on non-finite
  /// parameter gradients.
  void backward();

  const ParamStore<T>& grads() const { return grads_; }
  ParamStore<T>& grads() { return grads_; }

  /// Gradient of the root with respect to a leaf (valid after backward()).
  const Tensor4<T>& input_grad(int leaf_id) const;

  /// Recomputes every node from the leaves and returns the largest absolute
  /// difference against the stored forward values (0 means bit-identical).
  double replay_max_diff() const;

  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op { leaf, conv, bias, norm, relu, add, scale, solve };

  struct Node {
    Op op = Op::leaf;
    int a = -1, b = -1;
    int p0 = -1, p1 = -1;
    T s = T(0);  // scale factor or step size
    Tensor4<T> out;
    std::vector<T> mean, inv;  // instance norm statistics
    std::vector<T> mult;       // solve: spectral multiplier (c*h*w)
  };

  Tensor4<T> eval_node(const Node& n, bool save_aux, Node* dst) const;
  void set_root(int id);
  void accumulate(int id, const Tensor4<T>& g);

  const ParamStore<T>* params_;
  ParamStore<T> grads_;
  std::vector<Node> nodes_;
  std::vector<Tensor4<T>> node_grads_;

  int root_ = -1;
  enum class RootKind { none, sum, dot, wce } root_kind_ = RootKind::none;
  Tensor4<T> root_cotangent_;
  std::vector<uint8_t> root_labels_;
  std::vector<T> root_weights_;
};

/// Builds the network computation on the tape and returns the logits node.
template <class T>
int taped_forward(Tape<T>& tape, const NetworkSpec& spec, const ParamStore<T>& store,
                  int input_leaf);

/// Stable weighted softmax cross entropy: weighted mean over pixels of
/// w[label] * (-log softmax(logits)[label]); the mean is normalized by the
/// total weight. Labels run over (batch, h, w) with values in [0, classes).
template <class T>
double weighted_cross_entropy(const Tensor4<T>& logits, const std::vector<uint8_t>& labels,
                              const std::vector<T>& class_weights);

/// Gradient of weighted_cross_entropy with respect to the logits.
template <class T>
Tensor4<T> weighted_cross_entropy_grad(const Tensor4<T>& logits,
                                       const std::vector<uint8_t>& labels,
                                       const std::vector<T>& class_weights);

}  // namespace imex
