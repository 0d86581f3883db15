#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mcdrive/tensor.hpp"

namespace mcdrive {

enum class LayerKind { Convolution, Dense, Relu, Softmax, Dropout, Flatten };
enum class HeadKind { Regression, Classification };
enum class ForwardMode { Deterministic, Stochastic };

std::string to_string(LayerKind kind);
std::string to_string(HeadKind head);
LayerKind parse_layer_kind(const std::string& name);
HeadKind parse_head_kind(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  // Convolution: valid padding, filters x (kernel_h, kernel_w) with strides.
  int filters = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride_h = 1;
  int stride_w = 1;
  // Dense.
  int units = 0;
  // Dropout: probability that a unit is zeroed.
  double p_drop = 0.0;

  static LayerSpec convolution(int filters, int kernel, int stride);
  static LayerSpec convolution(int filters, int kernel_h, int kernel_w, int stride_h, int stride_w);
  static LayerSpec dense(int units);
  static LayerSpec relu();
  static LayerSpec softmax();
  static LayerSpec dropout(double p_drop);
  static LayerSpec flatten();

  bool has_weights() const noexcept {
    return kind == LayerKind::Convolution || kind == LayerKind::Dense;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct InputShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  HeadKind head = HeadKind::Regression;
  InputShape input;
  double l2_lambda = 0.0;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Activation shape after each layer ({h, w, c} or {n}). Throws ShapeError on
// any incompatibility or head violation.
std::vector<std::vector<std::size_t>> layer_shapes(const NetworkSpec& spec);
void validate(const NetworkSpec& spec);
std::size_t output_size(const NetworkSpec& spec);
std::size_t weight_layer_count(const NetworkSpec& spec);
std::size_t dropout_layer_count(const NetworkSpec& spec);
// Total number of units that sit behind a dropout layer with p_drop > 0.
std::size_t droppable_units(const NetworkSpec& spec);

// Weights are (kh, kw, c_in, c_out) for convolutions and (in, out) for dense
// layers; bias has one entry per output channel/unit. Parameter-free layers
// hold empty tensors.
struct LayerParams {
  Tensor weights;
  Tensor bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

class Network {
 public:
  Network(NetworkSpec spec, std::vector<LayerParams> params);

  // Glorot-uniform weights, zero biases.
  static Network initialize(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const std::vector<LayerParams>& params() const noexcept { return params_; }
  std::vector<LayerParams>& params() noexcept { return params_; }
  std::size_t parameter_count() const noexcept;
  std::size_t output_size() const noexcept { return output_size_; }

  friend bool operator==(const Network& a, const Network& b) {
    return a.spec_ == b.spec_ && a.params_ == b.params_;
  }

 private:
  NetworkSpec spec_;
  std::vector<LayerParams> params_;
  std::size_t output_size_ = 0;
};

// Numerically stable softmax. Throws on empty or non-finite input.
std::vector<double> softmax(std::span<const double> logits);

// Explicit keep masks, one per dropout layer in layer order (1 = keep).
using DropoutMasks = std::vector<std::vector<std::uint8_t>>;

// Single forward pass. Stochastic mode samples inverted-dropout masks from a
// SplitMix64 stream seeded with `seed`; deterministic mode ignores it.
Tensor forward(const Network& net, const Tensor& input, ForwardMode mode, std::uint64_t seed = 0);

Tensor forward_masked(const Network& net, const Tensor& input, const DropoutMasks& masks);

// `passes` stochastic passes over one input; returns {passes, outputs}.
// Row t is bit-identical to forward(net, input, Stochastic, derive_seed(seed, t)).
Tensor forward_passes(const Network& net, const Tensor& input, std::size_t passes, std::uint64_t seed);

}  // namespace mcdrive
