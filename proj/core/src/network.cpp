#include "mcdrive/network.hpp"

#include <algorithm>
#include <cmath>

#include "engine.hpp"
#include "mcdrive/error.hpp"
#include "mcdrive/rng.hpp"

namespace mcdrive {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Convolution: return "convolution";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Flatten: return "flatten";
  }
  return "unknown";
}

std::string to_string(HeadKind head) {
  return head == HeadKind::Regression ? "regression" : "classification";
}

LayerKind parse_layer_kind(const std::string& name) {
  for (LayerKind k : {LayerKind::Convolution, LayerKind::Dense, LayerKind::Relu,
                      LayerKind::Softmax, LayerKind::Dropout, LayerKind::Flatten}) {
    if (to_string(k) == name) return k;
  }
  throw FormatError("unknown layer kind '" + name + "'");
}

HeadKind parse_head_kind(const std::string& name) {
  if (name == "regression") return HeadKind::Regression;
  if (name == "classification") return HeadKind::Classification;
  throw FormatError("unknown head '" + name + "'");
}

LayerSpec LayerSpec::convolution(int filters, int kernel, int stride) {
  return convolution(filters, kernel, kernel, stride, stride);
}

LayerSpec LayerSpec::convolution(int filters, int kernel_h, int kernel_w, int stride_h,
                                 int stride_w) {
  LayerSpec l;
  l.kind = LayerKind::Convolution;
  l.filters = filters;
  l.kernel_h = kernel_h;
  l.kernel_w = kernel_w;
  l.stride_h = stride_h;
  l.stride_w = stride_w;
  return l;
}

LayerSpec LayerSpec::dense(int units) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.units = units;
  return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::softmax() {
  LayerSpec l;
  l.kind = LayerKind::Softmax;
  return l;
}

LayerSpec LayerSpec::dropout(double p_drop) {
  LayerSpec l;
  l.kind = LayerKind::Dropout;
  l.p_drop = p_drop;
  return l;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::Flatten;
  return l;
}

std::vector<std::vector<std::size_t>> layer_shapes(const NetworkSpec& spec) {
  if (spec.input.height <= 0 || spec.input.width <= 0 || spec.input.channels <= 0) {
    throw ShapeError("input shape dimensions must be positive");
  }
  if (!(spec.l2_lambda >= 0.0) || !std::isfinite(spec.l2_lambda)) {
    throw ShapeError("l2_lambda must be a finite nonnegative number");
  }
  if (spec.layers.empty()) throw ShapeError("network has no layers");

  std::vector<std::size_t> cur{static_cast<std::size_t>(spec.input.height),
                               static_cast<std::size_t>(spec.input.width),
                               static_cast<std::size_t>(spec.input.channels)};
  std::vector<std::vector<std::size_t>> shapes;
  shapes.reserve(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::Convolution: {
        if (cur.size() != 3) throw ShapeError(where + ": convolution needs a 3-D input");
        if (l.filters <= 0 || l.kernel_h <= 0 || l.kernel_w <= 0 || l.stride_h <= 0 ||
            l.stride_w <= 0) {
          throw ShapeError(where + ": dimensions must be positive");
        }
        const auto kh = static_cast<std::size_t>(l.kernel_h);
        const auto kw = static_cast<std::size_t>(l.kernel_w);
        if (cur[0] < kh || cur[1] < kw) {
          throw ShapeError(where + ": kernel larger than input");
        }
        cur = {(cur[0] - kh) / static_cast<std::size_t>(l.stride_h) + 1,
               (cur[1] - kw) / static_cast<std::size_t>(l.stride_w) + 1,
               static_cast<std::size_t>(l.filters)};
        break;
      }
      case LayerKind::Dense:
        if (cur.size() != 1) throw ShapeError(where + ": dense needs a flattened input");
        if (l.units <= 0) throw ShapeError(where + ": unit count must be positive");
        cur = {static_cast<std::size_t>(l.units)};
        break;
      case LayerKind::Flatten:
        cur = {shape_product(cur)};
        break;
      case LayerKind::Dropout:
        if (!(l.p_drop >= 0.0 && l.p_drop < 1.0)) {
          throw ShapeError(where + ": p_drop must lie in [0, 1)");
        }
        break;
      case LayerKind::Softmax:
        if (cur.size() != 1) throw ShapeError(where + ": softmax needs a flattened input");
        break;
      case LayerKind::Relu:
        break;
    }
    shapes.push_back(cur);
  }

  const auto& last = spec.layers.back();
  if (spec.head == HeadKind::Classification) {
    if (last.kind != LayerKind::Softmax || spec.layers.size() < 2 ||
        spec.layers[spec.layers.size() - 2].kind != LayerKind::Dense) {
      throw ShapeError("classification head must end in dense followed by softmax");
    }
    if (shapes.back()[0] < 2) throw ShapeError("classification head needs at least 2 classes");
  } else {
    if (last.kind != LayerKind::Dense || last.units != 1) {
      throw ShapeError("regression head must end in a single linear unit");
    }
  }
  return shapes;
}

void validate(const NetworkSpec& spec) { (void)layer_shapes(spec); }

std::size_t output_size(const NetworkSpec& spec) { return layer_shapes(spec).back()[0]; }

std::size_t weight_layer_count(const NetworkSpec& spec) {
  return static_cast<std::size_t>(std::count_if(spec.layers.begin(), spec.layers.end(),
                                                [](const LayerSpec& l) { return l.has_weights(); }));
}

std::size_t dropout_layer_count(const NetworkSpec& spec) {
  return static_cast<std::size_t>(
      std::count_if(spec.layers.begin(), spec.layers.end(),
                    [](const LayerSpec& l) { return l.kind == LayerKind::Dropout; }));
}

std::size_t droppable_units(const NetworkSpec& spec) {
  const auto shapes = layer_shapes(spec);
  std::size_t n = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::Dropout && spec.layers[i].p_drop > 0.0) {
      n += shape_product(shapes[i]);
    }
  }
  return n;
}

namespace {

std::vector<std::size_t> expected_weight_shape(const LayerSpec& l, const detail::Geometry& g) {
  if (l.kind == LayerKind::Convolution) {
    return {static_cast<std::size_t>(l.kernel_h), static_cast<std::size_t>(l.kernel_w), g.in_c,
            g.out_c};
  }
  return {g.in_size(), g.out_c};
}

}  // namespace

Network::Network(NetworkSpec spec, std::vector<LayerParams> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  const auto geo = detail::plan(spec_);
  if (params_.size() != spec_.layers.size()) {
    throw ShapeError("parameter list has " + std::to_string(params_.size()) +
                     " entries, network has " + std::to_string(spec_.layers.size()) +
                     " layers");
  }
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const LayerParams& p = params_[i];
    if (!l.has_weights()) {
      if (!p.weights.empty() || !p.bias.empty()) {
        throw ShapeError("layer " + std::to_string(i) + " takes no parameters");
      }
      continue;
    }
    const auto ws = expected_weight_shape(l, geo[i]);
    if (p.weights.shape() != ws || p.bias.shape() != std::vector<std::size_t>{geo[i].out_c}) {
      throw ShapeError("layer " + std::to_string(i) + " parameter shapes " +
                       p.weights.shape_string() + "/" + p.bias.shape_string() +
                       " do not match the layer");
    }
    if (!p.weights.all_finite() || !p.bias.all_finite()) {
      throw NumericError("layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
  output_size_ = geo.back().out_size();
}

Network Network::initialize(NetworkSpec spec, std::uint64_t seed) {
  const auto geo = detail::plan(spec);
  SplitMix64 rng(seed);
  std::vector<LayerParams> params(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (!l.has_weights()) continue;
    const auto shape = expected_weight_shape(l, geo[i]);
    double fan_in = 0.0;
    double fan_out = 0.0;
    if (l.kind == LayerKind::Convolution) {
      const double area = static_cast<double>(l.kernel_h * l.kernel_w);
      fan_in = area * static_cast<double>(geo[i].in_c);
      fan_out = area * static_cast<double>(geo[i].out_c);
    } else {
      fan_in = static_cast<double>(geo[i].in_size());
      fan_out = static_cast<double>(geo[i].out_c);
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor w(shape);
    for (double& v : w.values()) v = (2.0 * rng.uniform() - 1.0) * limit;
    params[i].weights = std::move(w);
    params[i].bias = Tensor({geo[i].out_c}, 0.0);
  }
  return Network(std::move(spec), std::move(params));
}

std::size_t Network::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weights.size() + p.bias.size();
  return n;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax of an empty vector");
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("softmax input is not finite");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

namespace {

void check_input(const Network& net, const Tensor& input) {
  const InputShape& s = net.spec().input;
  const std::vector<std::size_t> want{static_cast<std::size_t>(s.height),
                                      static_cast<std::size_t>(s.width),
                                      static_cast<std::size_t>(s.channels)};
  if (input.shape() != want) {
    throw ShapeError("input shape " + input.shape_string() + " does not match network input (" +
                     std::to_string(s.height) + ", " + std::to_string(s.width) + ", " +
                     std::to_string(s.channels) + ")");
  }
}

Tensor finish(std::vector<double>&& out) {
  for (double v : out) {
    if (!std::isfinite(v)) throw NumericError("forward pass produced non-finite activations");
  }
  return Tensor::vector(std::move(out));
}

}  // namespace

Tensor forward(const Network& net, const Tensor& input, ForwardMode mode, std::uint64_t seed) {
  check_input(net, input);
  detail::Engine engine(net);
  SplitMix64 rng(seed);
  detail::MaskSource masks;
  if (mode == ForwardMode::Stochastic) {
    masks.mode = detail::MaskMode::Sample;
    masks.rng = &rng;
  }
  std::vector<double> out;
  engine.run(0, net.spec().layers.size(), input.data(), out, masks, nullptr);
  return finish(std::move(out));
}

Tensor forward_masked(const Network& net, const Tensor& input, const DropoutMasks& masks) {
  check_input(net, input);
  if (masks.size() != dropout_layer_count(net.spec())) {
    throw ShapeError("expected " + std::to_string(dropout_layer_count(net.spec())) +
                     " dropout masks, got " + std::to_string(masks.size()));
  }
  detail::Engine engine(net);
  detail::MaskSource src;
  src.mode = detail::MaskMode::Explicit;
  src.masks = &masks;
  std::vector<double> out;
  engine.run(0, net.spec().layers.size(), input.data(), out, src, nullptr);
  return finish(std::move(out));
}

Tensor forward_passes(const Network& net, const Tensor& input, std::size_t passes,
                      std::uint64_t seed) {
  check_input(net, input);
  if (passes == 0) throw ShapeError("number of passes must be positive");
  detail::Engine engine(net);
  const std::size_t n_layers = net.spec().layers.size();
  const std::size_t split = engine.first_dropout_layer();

  // Layers ahead of the first dropout layer are deterministic; run them once.
  detail::MaskSource none;
  std::vector<double> prefix;
  engine.run(0, split, input.data(), prefix, none, nullptr);

  const std::size_t width = net.output_size();
  std::vector<double> rows(passes * width);
  std::vector<double> out;
  for (std::size_t t = 0; t < passes; ++t) {
    SplitMix64 rng(derive_seed(seed, t));
    detail::MaskSource masks;
    masks.mode = detail::MaskMode::Sample;
    masks.rng = &rng;
    engine.run(split, n_layers, prefix, out, masks, nullptr);
    for (double v : out) {
      if (!std::isfinite(v)) throw NumericError("forward pass produced non-finite activations");
    }
    std::copy(out.begin(), out.end(), rows.begin() + static_cast<std::ptrdiff_t>(t * width));
  }
  return Tensor({passes, width}, std::move(rows));
}

}  // namespace mcdrive
