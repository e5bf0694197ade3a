#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "imex/autodiff.hpp"
#include "imex/qtips.hpp"

// SGD training over Q-tips datasets with the weighted cross-entropy loss,
// plus the evaluation metrics: per-class IOU, mean IOU over the object
// classes, and pixel accuracy.

namespace imex {

/// Inverse-frequency class weights normalized to mean 1. Every class must
/// occur at least once.
std::vector<double> class_weights(const qtips::Dataset& ds);

/// Per-pixel argmax with ties broken toward the smallest class id.
template <class T>
std::vector<uint8_t> argmax_labels(const Tensor4<T>& logits);

/// Intersection over union for one class over whole label maps. An empty
/// union (class absent from both) counts as 1.
double iou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth, int class_id);

/// Mean IOU over the object classes 1..n_classes-1 (background excluded).
double mean_iou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth,
                int n_classes);

/// Percent of pixels labeled correctly, background included.
double pixel_accuracy(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth);

struct Metrics {
  double loss = 0.0;
  std::array<double, 3> iou_class{0.0, 0.0, 0.0};  // classes 1..3
  double miou = 0.0;
  double accuracy = 0.0;  // percent
};

/// Streaming confusion counts so metrics aggregate across batches.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(int n_classes);
  void add(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth);
  void add_loss(double weighted_num, double weighted_den);
  Metrics finalize() const;

 private:
  int n_classes_;
  std::vector<uint64_t> intersection_, union_;
  uint64_t correct_ = 0, total_ = 0;
  double loss_num_ = 0.0, loss_den_ = 0.0;
};

/// Forward evaluation over a dataset in fixed-size batches.
template <class T>
Metrics evaluate(const NetworkSpec& spec, const ParamStore<T>& store, const qtips::Dataset& ds,
                 const std::vector<T>& weights, int batch = 8);

template <class T>
void sgd_step(ParamStore<T>& params, const ParamStore<T>& grads, T lr);

struct TrainOptions {
  int epochs = 40;
  double lr = 1e-3;
  int batch = 8;
  uint64_t seed = 0;
  InitKind init = InitKind::Scaled;
};

struct EpochRecord {
  int epoch = 0;
  Metrics train;  // loss averaged over training batches, metrics from them
  Metrics val;
};

struct TrainResult {
  ParamStore<float> params;
  std::vector<EpochRecord> trace;
  std::vector<float> weights;  // class weights used for the loss
};

/// Plain SGD; deterministic given the seed (initialization draws and
/// per-epoch shuffles come from one generator). Throws NumericError with
/// the epoch/batch index if the loss turns non-finite.
TrainResult train(const NetworkSpec& spec, const qtips::Dataset& ds_train,
                  const qtips::Dataset& ds_val, const TrainOptions& opts);

}  // namespace imex
