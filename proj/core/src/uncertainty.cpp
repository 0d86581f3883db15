#include "mcdrive/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mcdrive/error.hpp"
#include "mcdrive/rng.hpp"
#include "mcdrive/steering.hpp"

namespace mcdrive {

PassSamples PassSamples::regression(std::vector<double> values) {
  if (values.empty()) throw ShapeError("regression samples need at least one pass");
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("regression sample is not finite");
  }
  const std::size_t t = values.size();
  return PassSamples(HeadKind::Regression, t, 1, std::move(values));
}

PassSamples PassSamples::classification(std::size_t passes, std::size_t classes,
                                        std::vector<double> rows) {
  if (passes == 0 || classes == 0) throw ShapeError("classification samples need T, C >= 1");
  if (rows.size() != passes * classes) {
    throw ShapeError("classification samples: expected " + std::to_string(passes * classes) +
                     " values, got " + std::to_string(rows.size()));
  }
  for (std::size_t t = 0; t < passes; ++t) {
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = rows[t * classes + c];
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw NumericError("row " + std::to_string(t) + " has a negative or non-finite entry");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw NumericError("row " + std::to_string(t) + " sums to " + std::to_string(sum));
    }
  }
  return PassSamples(HeadKind::Classification, passes, classes, std::move(rows));
}

PassSamples mc_samples(const Network& net, const Tensor& input, std::size_t passes,
                       std::uint64_t seed) {
  Tensor rows = forward_passes(net, input, passes, seed);
  if (net.spec().head == HeadKind::Regression) return PassSamples::regression(std::move(rows.values()));
  return PassSamples::classification(passes, net.output_size(), std::move(rows.values()));
}

namespace {

void require(const PassSamples& s, HeadKind kind, const char* op) {
  if (s.kind() != kind) {
    throw ShapeError(std::string(op) + " needs " + to_string(kind) + " samples");
  }
}

struct Moments {
  double mean = 0.0;
  double m2 = 0.0;
};

Moments running_moments(std::span<const double> xs) {
  Moments m;
  double k = 0.0;
  for (double x : xs) {
    k += 1.0;
    const double delta = x - m.mean;
    m.mean += delta / k;
    m.m2 += delta * (x - m.mean);
  }
  return m;
}

std::size_t row_argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

// sum_c p_c ln p_c with 0 ln 0 = 0, always accumulated in class order.
double neg_entropy(std::span<const double> p) {
  double s = 0.0;
  for (double v : p) {
    if (v > 0.0) s += v * std::log(v);
  }
  return s;
}

}  // namespace

double predictive_mean(const PassSamples& s) {
  require(s, HeadKind::Regression, "predictive_mean");
  const auto v = s.values();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return std::clamp(running_moments(v).mean, *lo, *hi);
}

double predictive_variance(const PassSamples& s, double tau) {
  require(s, HeadKind::Regression, "predictive_variance");
  if (!(tau > 0.0)) throw NumericError("tau must be positive");
  const Moments m = running_moments(s.values());
  const double spread = std::max(0.0, m.m2 / static_cast<double>(s.passes()));
  return 1.0 / tau + spread;
}

double compute_tau(double length_scale, double p_keep, std::size_t n_train, double lambda) {
  if (!(length_scale > 0.0) || !std::isfinite(length_scale)) {
    throw NumericError("length scale must be positive");
  }
  if (!(p_keep > 0.0 && p_keep <= 1.0)) throw NumericError("p_keep must lie in (0, 1]");
  if (n_train == 0) throw NumericError("training-set size must be positive");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw NumericError("lambda must be positive");
  return length_scale * length_scale * p_keep / (2.0 * static_cast<double>(n_train) * lambda);
}

ModeFrequency mode_and_freq(const PassSamples& s) {
  require(s, HeadKind::Classification, "mode_and_freq");
  std::vector<std::size_t> counts(s.classes(), 0);
  for (std::size_t t = 0; t < s.passes(); ++t) ++counts[row_argmax(s.row(t))];
  const auto it = std::max_element(counts.begin(), counts.end());
  return {static_cast<int>(it - counts.begin()), *it};
}

double variation_ratio(const PassSamples& s) {
  const ModeFrequency m = mode_and_freq(s);
  return 1.0 - static_cast<double>(m.frequency) / static_cast<double>(s.passes());
}

std::vector<double> mean_distribution(const PassSamples& s) {
  require(s, HeadKind::Classification, "mean_distribution");
  std::vector<double> mean(s.classes(), 0.0);
  double k = 0.0;
  for (std::size_t t = 0; t < s.passes(); ++t) {
    k += 1.0;
    const auto row = s.row(t);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += (row[c] - mean[c]) / k;
  }
  return mean;
}

double entropy(std::span<const double> p) { return std::max(0.0, -neg_entropy(p)); }

double predictive_entropy(const PassSamples& s) {
  const auto mean = mean_distribution(s);
  return entropy(mean);
}

double mutual_information(const PassSamples& s) {
  const auto mean = mean_distribution(s);
  const double h = entropy(mean);
  double avg = 0.0;
  double k = 0.0;
  for (std::size_t t = 0; t < s.passes(); ++t) {
    k += 1.0;
    avg += (neg_entropy(s.row(t)) - avg) / k;
  }
  return std::clamp(h + avg, 0.0, h);
}

std::vector<double> exact_predictive_distribution(const Network& net, const Tensor& input) {
  const NetworkSpec& spec = net.spec();
  if (spec.head != HeadKind::Classification) {
    throw ShapeError("exact predictive distribution needs a classification head");
  }
  const auto shapes = layer_shapes(spec);
  struct Slot {
    std::size_t mask;
    std::size_t unit;
    double p_drop;
  };
  DropoutMasks masks;
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind != LayerKind::Dropout) continue;
    const std::size_t units = shape_product(shapes[i]);
    masks.emplace_back(units, 1);
    if (spec.layers[i].p_drop > 0.0) {
      for (std::size_t u = 0; u < units; ++u) slots.push_back({masks.size() - 1, u, spec.layers[i].p_drop});
    }
  }
  if (slots.size() > kMaxEnumerableUnits) {
    throw ShapeError("network has " + std::to_string(slots.size()) +
                     " droppable units; enumeration supports at most " +
                     std::to_string(kMaxEnumerableUnits));
  }
  std::vector<double> dist(net.output_size(), 0.0);
  const std::uint64_t combos = std::uint64_t{1} << slots.size();
  for (std::uint64_t bits = 0; bits < combos; ++bits) {
    double weight = 1.0;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const bool keep = (bits >> k) & 1U;
      masks[slots[k].mask][slots[k].unit] = keep ? 1 : 0;
      weight *= keep ? 1.0 - slots[k].p_drop : slots[k].p_drop;
    }
    const Tensor out = forward_masked(net, input, masks);
    for (std::size_t c = 0; c < dist.size(); ++c) dist[c] += weight * out[c];
  }
  return dist;
}

PrecisionParams make_precision(double length_scale, double p_keep, std::size_t n_train,
                               double lambda) {
  return {length_scale, p_keep, n_train, lambda,
          compute_tau(length_scale, p_keep, n_train, lambda)};
}

double keep_probability(const NetworkSpec& spec) {
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::Dropout && l.p_drop > 0.0) return 1.0 - l.p_drop;
  }
  return 1.0;
}

UncertaintyReport summarize(const PassSamples& s, double tau) {
  UncertaintyReport r;
  r.kind = s.kind();
  r.passes = s.passes();
  if (s.kind() == HeadKind::Regression) {
    std::vector<double> deg(s.values().begin(), s.values().end());
    for (double& v : deg) v = denormalize_angle(v);
    const auto degrees = PassSamples::regression(std::move(deg));
    r.prediction_deg = std::clamp(predictive_mean(degrees), -kMaxSteeringDeg, kMaxSteeringDeg);
    r.variance = predictive_variance(degrees, tau);
    return r;
  }
  const ModeFrequency m = mode_and_freq(s);
  r.mode_class = m.mode_class;
  r.mode_freq = m.frequency;
  r.variation_ratio = 1.0 - static_cast<double>(m.frequency) / static_cast<double>(s.passes());
  r.entropy = predictive_entropy(s);
  r.mutual_information = mutual_information(s);
  r.prediction_deg = s.classes() == static_cast<std::size_t>(kSteeringClasses)
                         ? unbucket(m.mode_class)
                         : static_cast<double>(m.mode_class);
  return r;
}

namespace {

double gaussian_log_likelihood(const PassSamples& s, double target, double tau) {
  const auto v = s.values();
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(v.size());
  for (std::size_t t = 0; t < v.size(); ++t) {
    const double d = target - v[t];
    terms[t] = -0.5 * tau * d * d;
    mx = std::max(mx, terms[t]);
  }
  double acc = 0.0;
  for (double x : terms) acc += std::exp(x - mx);
  return mx + std::log(acc) - std::log(static_cast<double>(v.size())) -
         0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * std::log(tau);
}

}  // namespace

TauCalibration calibrate_tau(std::span<const double> l_grid, std::span<const double> lambda_grid,
                             std::span<const double> validation_targets, double p_keep,
                             std::size_t n_train, const LambdaEvaluator& evaluate) {
  if (l_grid.empty() || lambda_grid.empty()) throw ShapeError("calibration grids must be non-empty");
  if (validation_targets.empty()) throw ShapeError("calibration needs a validation set");

  TauCalibration out;
  double best_rmse = std::numeric_limits<double>::infinity();
  double best_lambda = 0.0;
  std::vector<PassSamples> best_samples;
  for (double lambda : lambda_grid) {
    std::vector<PassSamples> samples = evaluate(lambda);
    if (samples.size() != validation_targets.size()) {
      throw ShapeError("evaluator returned the wrong number of validation predictions");
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double d = predictive_mean(samples[i]) - validation_targets[i];
      sq += d * d;
    }
    const double rmse = std::sqrt(sq / static_cast<double>(samples.size()));
    out.lambda_rmse.emplace_back(lambda, rmse);
    if (rmse < best_rmse || (rmse == best_rmse && lambda < best_lambda)) {
      best_rmse = rmse;
      best_lambda = lambda;
      best_samples = std::move(samples);
    }
  }
  if (best_samples.empty()) throw NumericError("no lambda produced a finite validation error");

  double best_ll = -std::numeric_limits<double>::infinity();
  double best_l = std::numeric_limits<double>::infinity();
  for (double l : l_grid) {
    const double tau = compute_tau(l, p_keep, n_train, best_lambda);
    double ll = 0.0;
    for (std::size_t i = 0; i < best_samples.size(); ++i) {
      ll += gaussian_log_likelihood(best_samples[i], validation_targets[i], tau);
    }
    ll /= static_cast<double>(best_samples.size());
    out.length_scale_ll.emplace_back(l, ll);
    if (ll > best_ll || (ll == best_ll && l < best_l)) {
      best_ll = ll;
      best_l = l;
    }
  }
  out.params = make_precision(best_l, p_keep, n_train, best_lambda);
  return out;
}

TauCalibration calibrate_tau(const NetworkSpec& base, const TrainingData& train,
                             const TrainingData& validation, const TrainConfig& cfg,
                             std::span<const double> l_grid, std::span<const double> lambda_grid,
                             std::size_t passes, std::uint64_t seed) {
  if (base.head != HeadKind::Regression) throw ShapeError("tau calibration needs a regression head");
  const std::size_t per = validation.shape.size();
  auto evaluate = [&](double lambda) {
    NetworkSpec spec = base;
    spec.l2_lambda = lambda;
    TrainResult trained = mcdrive::train(Network::initialize(spec, seed), train, cfg);
    std::vector<PassSamples> out;
    out.reserve(validation.size());
    for (std::size_t i = 0; i < validation.size(); ++i) {
      const float* px = validation.pixels.data() + i * per;
      Tensor input({static_cast<std::size_t>(validation.shape.height),
                    static_cast<std::size_t>(validation.shape.width),
                    static_cast<std::size_t>(validation.shape.channels)},
                   std::vector<double>(px, px + per));
      out.push_back(mc_samples(trained.network, input, passes, derive_seed(seed, i)));
    }
    return out;
  };
  return calibrate_tau(l_grid, lambda_grid, validation.targets, keep_probability(base),
                       train.size(), evaluate);
}

}  // namespace mcdrive
