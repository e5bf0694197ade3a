#include "imex/train.hpp"

#include <cmath>

namespace imex {

std::vector<double> class_weights(const qtips::Dataset& ds) {
  const auto freq = qtips::class_frequencies(ds);
  const int n = static_cast<int>(freq.size());
  double inv_sum = 0.0;
  for (int c = 0; c < n; ++c) {
    if (freq[c] <= 0.0)
      throw ValueError("class_weights: class " + std::to_string(c) +
                       " is absent from the dataset");
    inv_sum += 1.0 / freq[c];
  }
  std::vector<double> w(n);
  for (int c = 0; c < n; ++c) w[c] = (1.0 / freq[c]) / inv_sum * n;
  return w;
}

template <class T>
std::vector<uint8_t> argmax_labels(const Tensor4<T>& logits) {
  const size_t plane = logits.plane_size();
  std::vector<uint8_t> out(static_cast<size_t>(logits.b) * plane);
  for (int bi = 0; bi < logits.b; ++bi) {
    const T* base = logits.plane(bi, 0);
    for (size_t p = 0; p < plane; ++p) {
      int best = 0;
      T bestv = base[p];
      for (int k = 1; k < logits.c; ++k) {
        const T v = base[static_cast<size_t>(k) * plane + p];
        if (v > bestv) {  // strict: ties keep the smaller class id
          bestv = v;
          best = k;
        }
      }
      out[static_cast<size_t>(bi) * plane + p] = static_cast<uint8_t>(best);
    }
  }
  return out;
}

double iou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth, int class_id) {
  require(pred.size() == truth.size(), "iou: label map sizes differ");
  uint64_t inter = 0, uni = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == class_id, t = truth[i] == class_id;
    inter += p && t;
    uni += p || t;
  }
  if (uni == 0) return 1.0;  // empty-union convention
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_iou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth,
                int n_classes) {
  double acc = 0.0;
  for (int c = 1; c < n_classes; ++c) acc += iou(pred, truth, c);
  return acc / (n_classes - 1);
}

double pixel_accuracy(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth) {
  require(pred.size() == truth.size(), "pixel_accuracy: label map sizes differ");
  uint64_t correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

MetricsAccumulator::MetricsAccumulator(int n_classes)
    : n_classes_(n_classes),
      intersection_(static_cast<size_t>(n_classes), 0),
      union_(static_cast<size_t>(n_classes), 0) {}

void MetricsAccumulator::add(const std::vector<uint8_t>& pred,
                             const std::vector<uint8_t>& truth) {
  require(pred.size() == truth.size(), "metrics: label map sizes differ");
  for (size_t i = 0; i < pred.size(); ++i) {
    correct_ += pred[i] == truth[i];
    ++total_;
  }
  for (int c = 0; c < n_classes_; ++c)
    for (size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] == c, t = truth[i] == c;
      intersection_[c] += p && t;
      union_[c] += p || t;
    }
}

void MetricsAccumulator::add_loss(double weighted_num, double weighted_den) {
  loss_num_ += weighted_num;
  loss_den_ += weighted_den;
}

Metrics MetricsAccumulator::finalize() const {
  Metrics m;
  m.loss = loss_den_ > 0.0 ? loss_num_ / loss_den_ : 0.0;
  double miou = 0.0;
  for (int c = 1; c < n_classes_; ++c) {
    const double v = union_[c] == 0
                         ? 1.0
                         : static_cast<double>(intersection_[c]) / static_cast<double>(union_[c]);
    if (c <= 3) m.iou_class[c - 1] = v;
    miou += v;
  }
  m.miou = miou / (n_classes_ - 1);
  m.accuracy = total_ > 0 ? 100.0 * static_cast<double>(correct_) / static_cast<double>(total_)
                          : 0.0;
  return m;
}

namespace {

template <class T>
void fill_batch(const qtips::Dataset& ds, const std::vector<int>& order, size_t begin,
                size_t count, Tensor4<T>& x, std::vector<uint8_t>& labels) {
  const int s = static_cast<int>(ds.meta.size);
  x = Tensor4<T>(static_cast<int>(count), 1, s, s);
  labels.resize(count * static_cast<size_t>(s) * s);
  for (size_t i = 0; i < count; ++i) {
    const auto& sample = ds.samples[static_cast<size_t>(order[begin + i])];
    T* dst = x.plane(static_cast<int>(i), 0);
    for (size_t p = 0; p < sample.image.size(); ++p) dst[p] = static_cast<T>(sample.image[p]);
    std::copy(sample.labels.begin(), sample.labels.end(),
              labels.begin() + static_cast<std::ptrdiff_t>(i * sample.labels.size()));
  }
}

}  // namespace

template <class T>
Metrics evaluate(const NetworkSpec& spec, const ParamStore<T>& store, const qtips::Dataset& ds,
                 const std::vector<T>& weights, int batch) {
  require(batch > 0, "evaluate: batch must be positive");
  MetricsAccumulator acc(spec.n_classes);
  std::vector<int> order(ds.samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Tensor4<T> x;
  std::vector<uint8_t> labels;
  for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch)) {
    const size_t count = std::min(static_cast<size_t>(batch), order.size() - begin);
    fill_batch(ds, order, begin, count, x, labels);
    const Tensor4<T> logits = forward(spec, store, x);
    const double loss = weighted_cross_entropy(logits, labels, weights);
    double den = 0.0;
    for (uint8_t l : labels) den += static_cast<double>(weights[l]);
    acc.add_loss(loss * den, den);
    acc.add(argmax_labels(logits), labels);
  }
  return acc.finalize();
}

template <class T>
void sgd_step(ParamStore<T>& params, const ParamStore<T>& grads, T lr) {
  require(params.params.size() == grads.params.size(), "sgd_step: store layout mismatch");
  const auto& K = kern::table<T>();
  for (size_t i = 0; i < params.params.size(); ++i) {
    auto& p = params.params[i].v;
    const auto& g = grads.params[i].v;
    require(p.size() == g.size(), "sgd_step: parameter size mismatch");
    K.axpy(-lr, g.data(), p.data(), p.size());
  }
}

TrainResult train(const NetworkSpec& spec, const qtips::Dataset& ds_train,
                  const qtips::Dataset& ds_val, const TrainOptions& opts) {
  validate_network(spec);
  require(spec.n_classes > 0, "train: network has no classifier");
  require(opts.lr > 0.0, "train: learning rate must be positive");
  require(opts.batch > 0 && opts.batch <= static_cast<int>(ds_train.samples.size()),
          "train: batch size must be in [1, n_train]");
  require(opts.epochs >= 0, "train: epoch count must be non-negative");

  TrainResult result;
  const std::vector<double> wd = class_weights(ds_train);
  result.weights.assign(wd.begin(), wd.end());

  ParamStore<float> params = build_param_store<float>(spec);
  Rng rng(opts.seed);
  init_params(spec, params, opts.init, rng);

  std::vector<int> order(ds_train.samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  Tensor4<float> x;
  std::vector<uint8_t> labels;
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    // Fisher-Yates with the shared generator
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    MetricsAccumulator train_acc(spec.n_classes);
    int batch_index = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(opts.batch)) {
      const size_t count = std::min(static_cast<size_t>(opts.batch), order.size() - begin);
      fill_batch(ds_train, order, begin, count, x, labels);
      Tape<float> tape(&params);
      const int input = tape.leaf(x);
      const int logits = taped_forward(tape, spec, params, input);
      const float loss = tape.weighted_ce_root(logits, labels, result.weights);
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      tape.backward();
      sgd_step(params, tape.grads(), static_cast<float>(opts.lr));

      double den = 0.0;
      for (uint8_t l : labels) den += static_cast<double>(result.weights[l]);
      train_acc.add_loss(static_cast<double>(loss) * den, den);
      train_acc.add(argmax_labels(tape.value(logits)), labels);
      ++batch_index;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = train_acc.finalize();
    rec.val = evaluate(spec, params, ds_val, result.weights);
    result.trace.push_back(rec);
  }
  result.params = std::move(params);
  return result;
}

template std::vector<uint8_t> argmax_labels<float>(const Tensor4<float>&);
template std::vector<uint8_t> argmax_labels<double>(const Tensor4<double>&);
template Metrics evaluate<float>(const NetworkSpec&, const ParamStore<float>&,
                                 const qtips::Dataset&, const std::vector<float>&, int);
template Metrics evaluate<double>(const NetworkSpec&, const ParamStore<double>&,
                                  const qtips::Dataset&, const std::vector<double>&, int);
template void sgd_step<float>(ParamStore<float>&, const ParamStore<float>&, float);
template void sgd_step<double>(ParamStore<double>&, const ParamStore<double>&, double);

}  // namespace imex
