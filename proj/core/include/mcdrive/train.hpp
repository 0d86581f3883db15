#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mcdrive/network.hpp"

namespace mcdrive {

enum class LossKind { MeanSquaredError, CategoricalCrossEntropy };

// Probabilities are clamped at this value before taking the log.
inline constexpr double kCrossEntropyEpsilon = 1e-12;

std::string to_string(LossKind kind);
LossKind default_loss(HeadKind head);

// MSE: mean squared difference. Cross-entropy: -sum target * ln(max(pred, eps)).
double loss(const Tensor& pred, const Tensor& target, LossKind kind);

// Non-owning view of a training set. `pixels` holds `size()` images laid out
// back to back (H x W x C, row-major). Regression uses `targets`,
// classification uses `labels`.
struct TrainingData {
  InputShape shape;
  std::span<const float> pixels;
  std::vector<double> targets;
  std::vector<int> labels;

  std::size_t size() const noexcept {
    const std::size_t per = shape.size();
    return per == 0 ? 0 : pixels.size() / per;
  }
};

struct TrainConfig {
  int epochs = 50;
  int batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::MeanSquaredError;
};

struct TrainResult {
  Network network;
  std::vector<double> loss_history;
};

// Mean data loss over `batch` plus l2_lambda * sum of squared weights of every
// weight layer except the last. Sample j of the batch draws its dropout masks
// from derive_seed(mask_seed, j) in stochastic mode. When `grads` is non-null
// it receives the exact gradient of the returned objective.
double objective(const Network& net, const TrainingData& data,
                 std::span<const std::size_t> batch, LossKind kind, ForwardMode mode,
                 std::uint64_t mask_seed, std::vector<LayerParams>* grads = nullptr);

using EpochCallback = std::function<void(int epoch, double loss)>;

// Minibatch SGD with a fixed learning rate and dropout active. Deterministic
// given cfg.seed. Throws DivergenceError if the loss becomes non-finite.
TrainResult train(Network net, const TrainingData& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace mcdrive
