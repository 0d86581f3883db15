#include "engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "kernels.hpp"
#include "mcdrive/error.hpp"

namespace mcdrive::detail {

std::vector<Geometry> plan(const NetworkSpec& spec) {
  const auto shapes = layer_shapes(spec);
  std::vector<Geometry> geo(spec.layers.size());
  std::vector<std::size_t> prev{static_cast<std::size_t>(spec.input.height),
                                static_cast<std::size_t>(spec.input.width),
                                static_cast<std::size_t>(spec.input.channels)};
  auto assign = [](const std::vector<std::size_t>& s, std::size_t& h, std::size_t& w,
                   std::size_t& c) {
    if (s.size() == 3) {
      h = s[0];
      w = s[1];
      c = s[2];
    } else {
      h = 1;
      w = 1;
      c = s[0];
    }
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    assign(prev, geo[i].in_h, geo[i].in_w, geo[i].in_c);
    assign(shapes[i], geo[i].out_h, geo[i].out_w, geo[i].out_c);
    prev = shapes[i];
  }
  return geo;
}

Engine::Engine(const Network& net) : net_(&net), geo_(plan(net.spec())) {
  const auto& layers = net.spec().layers;
  dropout_ordinal_.resize(layers.size() + 1);
  std::size_t count = 0;
  first_dropout_ = layers.size();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    dropout_ordinal_[i] = count;
    if (layers[i].kind == LayerKind::Dropout) {
      if (first_dropout_ == layers.size()) first_dropout_ = i;
      ++count;
    }
  }
  dropout_ordinal_[layers.size()] = count;
}

std::size_t Engine::dropout_index_before(std::size_t layer) const noexcept {
  return dropout_ordinal_[layer];
}

PassRecord Engine::make_record() const {
  PassRecord r;
  r.acts.resize(geo_.size() + 1);
  r.cols.resize(geo_.size());
  r.masks.resize(dropout_ordinal_.back());
  r.scales.assign(dropout_ordinal_.back(), 1.0);
  return r;
}

namespace {

void im2col(std::span<const double> in, const Geometry& g, const LayerSpec& l, double* col) {
  const std::size_t kh = static_cast<std::size_t>(l.kernel_h);
  const std::size_t kw = static_cast<std::size_t>(l.kernel_w);
  const std::size_t sh = static_cast<std::size_t>(l.stride_h);
  const std::size_t sw = static_cast<std::size_t>(l.stride_w);
  const std::size_t row_len = kw * g.in_c;
  const std::size_t k = kh * row_len;
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      double* dst = col + (oy * g.out_w + ox) * k;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const double* src = in.data() + ((oy * sh + ky) * g.in_w + ox * sw) * g.in_c;
        std::memcpy(dst + ky * row_len, src, row_len * sizeof(double));
      }
    }
  }
}

void col2im_acc(const double* col, const Geometry& g, const LayerSpec& l, double* din) {
  const std::size_t kh = static_cast<std::size_t>(l.kernel_h);
  const std::size_t kw = static_cast<std::size_t>(l.kernel_w);
  const std::size_t sh = static_cast<std::size_t>(l.stride_h);
  const std::size_t sw = static_cast<std::size_t>(l.stride_w);
  const std::size_t row_len = kw * g.in_c;
  const std::size_t k = kh * row_len;
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const double* src = col + (oy * g.out_w + ox) * k;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        double* dst = din + ((oy * sh + ky) * g.in_w + ox * sw) * g.in_c;
        const double* s = src + ky * row_len;
        for (std::size_t j = 0; j < row_len; ++j) dst[j] += s[j];
      }
    }
  }
}

void softmax_inplace(std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

}  // namespace

void Engine::run(std::size_t first, std::size_t last, std::span<const double> in,
                 std::vector<double>& out, MaskSource& masks, PassRecord* record) {
  const auto& layers = net_->spec().layers;
  const auto& params = net_->params();
  std::vector<double> cur(in.begin(), in.end());
  for (std::size_t i = first; i < last; ++i) {
    const LayerSpec& l = layers[i];
    const Geometry& g = geo_[i];
    if (record) record->acts[i] = cur;
    switch (l.kind) {
      case LayerKind::Convolution: {
        const std::size_t positions = g.out_h * g.out_w;
        const std::size_t k = static_cast<std::size_t>(l.kernel_h * l.kernel_w) * g.in_c;
        std::vector<double>& col = record ? record->cols[i] : col_;
        col.resize(positions * k);
        im2col(cur, g, l, col.data());
        tmp_.resize(positions * g.out_c);
        gemm_rows(col.data(), positions, k, params[i].weights.data().data(), g.out_c,
                  params[i].bias.data().data(), tmp_.data());
        cur.swap(tmp_);
        break;
      }
      case LayerKind::Dense: {
        tmp_.resize(g.out_c);
        gemm_rows(cur.data(), 1, g.in_size(), params[i].weights.data().data(), g.out_c,
                  params[i].bias.data().data(), tmp_.data());
        cur.swap(tmp_);
        break;
      }
      case LayerKind::Relu:
        for (double& x : cur) x = x > 0.0 ? x : 0.0;
        break;
      case LayerKind::Softmax:
        softmax_inplace(cur);
        break;
      case LayerKind::Flatten:
        break;
      case LayerKind::Dropout: {
        const std::size_t ordinal = dropout_ordinal_[i];
        std::vector<std::uint8_t>* keep = record ? &record->masks[ordinal] : nullptr;
        if (keep) keep->assign(cur.size(), 1);
        if (record) record->scales[ordinal] = 1.0;
        if (masks.mode == MaskMode::None) break;
        if (masks.mode == MaskMode::Explicit) {
          const auto& m = masks.masks->at(ordinal);
          if (m.size() != cur.size()) {
            throw ShapeError("dropout mask " + std::to_string(ordinal) + " has " +
                             std::to_string(m.size()) + " entries, layer has " +
                             std::to_string(cur.size()));
          }
          const double scale = 1.0 / (1.0 - l.p_drop);
          if (record) record->scales[ordinal] = scale;
          for (std::size_t j = 0; j < cur.size(); ++j) {
            cur[j] = m[j] ? cur[j] * scale : 0.0;
            if (keep) (*keep)[j] = m[j];
          }
          break;
        }
        if (l.p_drop <= 0.0) break;
        const double scale = 1.0 / (1.0 - l.p_drop);
        if (record) record->scales[ordinal] = scale;
        for (std::size_t j = 0; j < cur.size(); ++j) {
          const bool kept = masks.rng->uniform() >= l.p_drop;
          cur[j] = kept ? cur[j] * scale : 0.0;
          if (keep) (*keep)[j] = kept ? 1 : 0;
        }
        break;
      }
    }
  }
  out.swap(cur);
}

void Engine::backward(std::size_t top, const PassRecord& record, std::vector<double> grad,
                      std::vector<LayerParams>& grads) {
  const auto& layers = net_->spec().layers;
  const auto& params = net_->params();
  if (transposed_.size() != layers.size()) transposed_.assign(layers.size(), {});
  std::vector<double> next;
  for (std::size_t ii = top; ii-- > 0;) {
    const LayerSpec& l = layers[ii];
    const Geometry& g = geo_[ii];
    const std::vector<double>& x = record.acts[ii];
    const bool need_input_grad = ii > 0;
    switch (l.kind) {
      case LayerKind::Convolution: {
        const std::size_t positions = g.out_h * g.out_w;
        const std::size_t k = static_cast<std::size_t>(l.kernel_h * l.kernel_w) * g.in_c;
        const std::vector<double>& col = record.cols[ii];
        double* gw = grads[ii].weights.data().data();
        gemm_at_acc(col.data(), positions, k, grad.data(), g.out_c, gw);
        double* gb = grads[ii].bias.data().data();
        for (std::size_t p = 0; p < positions; ++p) {
          for (std::size_t c = 0; c < g.out_c; ++c) gb[c] += grad[p * g.out_c + c];
        }
        if (need_input_grad) {
          auto& wt = transposed_[ii];
          const double* w = params[ii].weights.data().data();
          wt.resize(k * g.out_c);
          for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < g.out_c; ++c) wt[c * k + r] = w[r * g.out_c + c];
          col_.resize(positions * k);
          gemm_bt(grad.data(), positions, g.out_c, wt.data(), k, col_.data());
          next.assign(g.in_size(), 0.0);
          col2im_acc(col_.data(), g, l, next.data());
          grad.swap(next);
        }
        break;
      }
      case LayerKind::Dense: {
        const std::size_t in = g.in_size();
        gemm_at_acc(x.data(), 1, in, grad.data(), g.out_c, grads[ii].weights.data().data());
        double* gb = grads[ii].bias.data().data();
        for (std::size_t c = 0; c < g.out_c; ++c) gb[c] += grad[c];
        if (need_input_grad) {
          const double* w = params[ii].weights.data().data();
          next.assign(in, 0.0);
          for (std::size_t r = 0; r < in; ++r) {
            const double* wr = w + r * g.out_c;
            double s = 0.0;
            for (std::size_t c = 0; c < g.out_c; ++c) s += wr[c] * grad[c];
            next[r] = s;
          }
          grad.swap(next);
        }
        break;
      }
      case LayerKind::Relu:
        for (std::size_t j = 0; j < grad.size(); ++j) {
          if (!(x[j] > 0.0)) grad[j] = 0.0;
        }
        break;
      case LayerKind::Softmax: {
        // Recompute the probabilities from the stored logits.
        std::vector<double> p = x;
        softmax_inplace(p);
        double dot = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * grad[j];
        for (std::size_t j = 0; j < p.size(); ++j) grad[j] = p[j] * (grad[j] - dot);
        break;
      }
      case LayerKind::Flatten:
        break;
      case LayerKind::Dropout: {
        const auto& keep = record.masks[dropout_ordinal_[ii]];
        const double scale = record.scales[dropout_ordinal_[ii]];
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] = keep[j] ? grad[j] * scale : 0.0;
        break;
      }
    }
  }
}

std::vector<LayerParams> zero_gradients(const Network& net) {
  std::vector<LayerParams> g;
  g.reserve(net.params().size());
  for (const auto& p : net.params()) {
    LayerParams z;
    if (!p.weights.empty()) z.weights = Tensor(p.weights.shape(), 0.0);
    if (!p.bias.empty()) z.bias = Tensor(p.bias.shape(), 0.0);
    g.push_back(std::move(z));
  }
  return g;
}

}  // namespace mcdrive::detail
