#include "mcdrive/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "engine.hpp"
#include "mcdrive/error.hpp"
#include "mcdrive/rng.hpp"

namespace mcdrive {

std::string to_string(LossKind kind) {
  return kind == LossKind::MeanSquaredError ? "mean-squared-error" : "categorical-cross-entropy";
}

LossKind default_loss(HeadKind head) {
  return head == HeadKind::Regression ? LossKind::MeanSquaredError
                                      : LossKind::CategoricalCrossEntropy;
}

double loss(const Tensor& pred, const Tensor& target, LossKind kind) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("loss: prediction shape " + pred.shape_string() +
                     " does not match target shape " + target.shape_string());
  }
  if (pred.empty()) throw ShapeError("loss of empty tensors");
  double acc = 0.0;
  if (kind == LossKind::MeanSquaredError) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - target[i];
      acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (target[i] != 0.0) acc -= target[i] * std::log(std::max(pred[i], kCrossEntropyEpsilon));
  }
  return acc;
}

namespace {

// Index of the last weight layer; it is exempt from the L2 penalty.
std::size_t last_weight_layer(const NetworkSpec& spec) {
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    if (spec.layers[i].has_weights()) return i;
  }
  return spec.layers.size();
}

void check_data(const Network& net, const TrainingData& data, LossKind kind) {
  if (!(data.shape == net.spec().input)) {
    throw ShapeError("training data shape does not match the network input");
  }
  const std::size_t n = data.size();
  if (n == 0) throw ShapeError("training data is empty");
  if (data.pixels.size() != n * data.shape.size()) {
    throw ShapeError("training pixel buffer is not a whole number of images");
  }
  if (kind == LossKind::MeanSquaredError) {
    if (net.spec().head != HeadKind::Regression) {
      throw ShapeError("mean-squared-error needs a regression head");
    }
    if (data.targets.size() != n) throw ShapeError("regression targets do not match images");
  } else {
    if (net.spec().head != HeadKind::Classification) {
      throw ShapeError("cross-entropy needs a classification head");
    }
    if (data.labels.size() != n) throw ShapeError("class labels do not match images");
    const int classes = static_cast<int>(net.output_size());
    for (int c : data.labels) {
      if (c < 0 || c >= classes) throw ShapeError("class label out of range");
    }
  }
}

}  // namespace

double objective(const Network& net, const TrainingData& data,
                 std::span<const std::size_t> batch, LossKind kind, ForwardMode mode,
                 std::uint64_t mask_seed, std::vector<LayerParams>* grads) {
  check_data(net, data, kind);
  if (batch.empty()) throw ShapeError("empty batch");
  const NetworkSpec& spec = net.spec();
  const std::size_t n_layers = spec.layers.size();
  const std::size_t per = data.shape.size();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool fused_softmax =
      kind == LossKind::CategoricalCrossEntropy && spec.layers.back().kind == LayerKind::Softmax;

  detail::Engine engine(net);
  detail::PassRecord record = engine.make_record();
  if (grads) *grads = detail::zero_gradients(net);

  std::vector<double> input(per);
  std::vector<double> out;
  double data_loss = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const std::size_t idx = batch[j];
    if (idx >= data.size()) throw ShapeError("batch index out of range");
    const float* src = data.pixels.data() + idx * per;
    std::copy(src, src + per, input.begin());

    SplitMix64 rng(derive_seed(mask_seed, j));
    detail::MaskSource masks;
    if (mode == ForwardMode::Stochastic) {
      masks.mode = detail::MaskMode::Sample;
      masks.rng = &rng;
    }
    engine.run(0, n_layers, input, out, masks, grads ? &record : nullptr);

    std::vector<double> g(out.size(), 0.0);
    if (kind == LossKind::MeanSquaredError) {
      const double inv_n = 1.0 / static_cast<double>(out.size());
      for (std::size_t c = 0; c < out.size(); ++c) {
        const double d = out[c] - data.targets[idx];
        data_loss += d * d * inv_n;
        g[c] = 2.0 * d * inv_n * inv_b;
      }
    } else {
      const auto label = static_cast<std::size_t>(data.labels[idx]);
      data_loss -= std::log(std::max(out[label], kCrossEntropyEpsilon));
      if (fused_softmax) {
        // d/dlogits of -ln softmax = p - onehot.
        for (std::size_t c = 0; c < out.size(); ++c) g[c] = out[c] * inv_b;
        g[label] -= inv_b;
      } else {
        g[label] = -inv_b / std::max(out[label], kCrossEntropyEpsilon);
      }
    }
    if (grads) engine.backward(fused_softmax ? n_layers - 1 : n_layers, record, std::move(g), *grads);
  }

  double penalty = 0.0;
  const std::size_t exempt = last_weight_layer(spec);
  if (spec.l2_lambda > 0.0) {
    for (std::size_t i = 0; i < n_layers; ++i) {
      if (!spec.layers[i].has_weights() || i == exempt) continue;
      const auto& w = net.params()[i].weights.values();
      double sq = 0.0;
      for (double v : w) sq += v * v;
      penalty += sq;
      if (grads) {
        auto& gw = (*grads)[i].weights.values();
        for (std::size_t k = 0; k < w.size(); ++k) gw[k] += 2.0 * spec.l2_lambda * w[k];
      }
    }
  }
  return data_loss * inv_b + spec.l2_lambda * penalty;
}

TrainResult train(Network net, const TrainingData& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  check_data(net, data, cfg.loss);
  const std::size_t n = data.size();
  if (cfg.epochs <= 0) throw ShapeError("epochs must be positive");
  if (cfg.batch_size <= 0 || static_cast<std::size_t>(cfg.batch_size) > n) {
    throw ShapeError("batch size must lie in [1, dataset size]");
  }
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ShapeError("learning rate must be positive");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  std::vector<LayerParams> grads;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch));
    SplitMix64 shuffle_rng(epoch_seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double total = 0.0;
    std::size_t b = 0;
    for (std::size_t start = 0; start < n; start += batch, ++b) {
      const std::size_t len = std::min(batch, n - start);
      std::span<const std::size_t> idx(order.data() + start, len);
      const double obj = objective(net, data, idx, cfg.loss, ForwardMode::Stochastic,
                                   derive_seed(epoch_seed ^ 0x5bd1e995ULL, b), &grads);
      if (!std::isfinite(obj)) {
        throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) +
                                         ": loss is not finite");
      }
      total += obj * static_cast<double>(len);
      for (std::size_t l = 0; l < grads.size(); ++l) {
        auto& p = net.params()[l];
        auto& w = p.weights.values();
        const auto& gw = grads[l].weights.values();
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= cfg.learning_rate * gw[k];
        auto& bias = p.bias.values();
        const auto& gb = grads[l].bias.values();
        for (std::size_t k = 0; k < bias.size(); ++k) bias[k] -= cfg.learning_rate * gb[k];
      }
    }
    const double epoch_loss = total / static_cast<double>(n);
    for (const auto& p : net.params()) {
      if (!p.weights.all_finite() || !p.bias.all_finite()) {
        throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) +
                                         ": weights are not finite");
      }
    }
    history.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return {std::move(net), std::move(history)};
}

}  // namespace mcdrive
