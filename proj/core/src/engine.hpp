#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mcdrive/network.hpp"
#include "mcdrive/rng.hpp"

namespace mcdrive::detail {

struct Geometry {
  std::size_t in_h = 1, in_w = 1, in_c = 1;
  std::size_t out_h = 1, out_w = 1, out_c = 1;
  std::size_t in_size() const noexcept { return in_h * in_w * in_c; }
  std::size_t out_size() const noexcept { return out_h * out_w * out_c; }
};

std::vector<Geometry> plan(const NetworkSpec& spec);

enum class MaskMode { None, Sample, Explicit };

struct MaskSource {
  MaskMode mode = MaskMode::None;
  SplitMix64* rng = nullptr;
  const DropoutMasks* masks = nullptr;
  // Index of the next dropout layer, counted over the whole network.
  std::size_t next = 0;
};

// Per-pass record kept for backpropagation.
struct PassRecord {
  std::vector<std::vector<double>> acts;  // acts[i] is the input of layer i
  std::vector<std::vector<double>> cols;  // im2col buffers, per layer
  DropoutMasks masks;                     // per dropout layer, in order
  std::vector<double> scales;             // scale applied to kept units
};

class Engine {
 public:
  explicit Engine(const Network& net);

  const Network& net() const noexcept { return *net_; }
  const std::vector<Geometry>& geometry() const noexcept { return geo_; }
  std::size_t dropout_index_before(std::size_t layer) const noexcept;
  std::size_t first_dropout_layer() const noexcept { return first_dropout_; }

  // Runs layers [first, last). `out` receives the final activation. When
  // `record` is non-null it must already be sized for the network.
  void run(std::size_t first, std::size_t last, std::span<const double> in,
           std::vector<double>& out, MaskSource& masks, PassRecord* record);

  // Accumulates parameter gradients for layers [0, top) given dL/d(output of
  // layer top-1). `record` must come from a full recorded run.
  void backward(std::size_t top, const PassRecord& record, std::vector<double> grad,
                std::vector<LayerParams>& grads);

  PassRecord make_record() const;

 private:
  const Network* net_;
  std::vector<Geometry> geo_;
  std::vector<std::size_t> dropout_ordinal_;
  std::size_t first_dropout_ = 0;
  std::vector<double> col_;
  std::vector<double> tmp_;
  std::vector<std::vector<double>> transposed_;
};

std::vector<LayerParams> zero_gradients(const Network& net);

}  // namespace mcdrive::detail
