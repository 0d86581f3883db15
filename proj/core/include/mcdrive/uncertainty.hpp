#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mcdrive/network.hpp"
#include "mcdrive/train.hpp"

namespace mcdrive {

inline constexpr std::size_t kDefaultPasses = 128;

// Outputs of T stochastic forward passes: T scalars for a regression head,
// or a T x C matrix of softmax rows for a classification head.
class PassSamples {
 public:
  static PassSamples regression(std::vector<double> values);
  // Rows must be nonnegative and sum to 1 within 1e-9.
  static PassSamples classification(std::size_t passes, std::size_t classes,
                                    std::vector<double> rows);

  HeadKind kind() const noexcept { return kind_; }
  std::size_t passes() const noexcept { return passes_; }
  std::size_t classes() const noexcept { return classes_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> row(std::size_t t) const {
    return std::span<const double>(data_).subspan(t * classes_, classes_);
  }

 private:
  PassSamples(HeadKind kind, std::size_t passes, std::size_t classes, std::vector<double> data)
      : kind_(kind), passes_(passes), classes_(classes), data_(std::move(data)) {}

  HeadKind kind_;
  std::size_t passes_;
  std::size_t classes_;
  std::vector<double> data_;
};

// T passes with masks drawn from (seed, pass index); regression samples are
// raw network outputs.
PassSamples mc_samples(const Network& net, const Tensor& input, std::size_t passes = kDefaultPasses,
                       std::uint64_t seed = 0);

double predictive_mean(const PassSamples& s);
// tau^-1 + (1/T) sum y_t^2 - mean^2, evaluated with a running (Welford)
// update so identical samples give exactly tau^-1. tau = +inf drops the
// noise term.
double predictive_variance(const PassSamples& s, double tau);

double compute_tau(double length_scale, double p_keep, std::size_t n_train, double lambda);

struct ModeFrequency {
  int mode_class = 0;
  std::size_t frequency = 0;
};

// Row labels are argmaxes; ties go to the lowest class index, both within a
// row and between equally frequent labels.
ModeFrequency mode_and_freq(const PassSamples& s);
double variation_ratio(const PassSamples& s);
// Natural log (nats); 0 ln 0 = 0.
double predictive_entropy(const PassSamples& s);
double mutual_information(const PassSamples& s);
// Per-class average of the rows.
std::vector<double> mean_distribution(const PassSamples& s);

// Entropy of a probability vector in nats.
double entropy(std::span<const double> p);

inline constexpr std::size_t kMaxEnumerableUnits = 20;

// Mask-weighted average of the softmax output over every dropout mask.
// Requires a classification head and at most 20 droppable units.
std::vector<double> exact_predictive_distribution(const Network& net, const Tensor& input);

struct PrecisionParams {
  double length_scale = 0.0;
  double p_keep = 1.0;
  std::size_t n_train = 0;
  double lambda = 0.0;
  double tau = 0.0;
};

PrecisionParams make_precision(double length_scale, double p_keep, std::size_t n_train,
                               double lambda);

// Keep probability of the network's dropout layers (1 - p_drop of the first
// layer with p_drop > 0, or 1 when there is none).
double keep_probability(const NetworkSpec& spec);

struct UncertaintyReport {
  HeadKind kind = HeadKind::Regression;
  std::size_t passes = 0;
  double prediction_deg = 0.0;
  // Regression.
  double variance = 0.0;
  // Classification.
  double variation_ratio = 0.0;
  double entropy = 0.0;
  double mutual_information = 0.0;
  int mode_class = 0;
  std::size_t mode_freq = 0;
};

// Regression samples are converted to degrees before taking the mean and
// variance, so variance is in deg^2. Classification predicts the modal class.
UncertaintyReport summarize(const PassSamples& s, double tau);

struct TauCalibration {
  PrecisionParams params;
  std::vector<std::pair<double, double>> lambda_rmse;    // (lambda, validation RMSE)
  std::vector<std::pair<double, double>> length_scale_ll;  // (l, validation log-likelihood)
};

// Produces MC samples for every validation item with a model regularized by
// the given lambda.
using LambdaEvaluator = std::function<std::vector<PassSamples>(double lambda)>;

// Picks lambda with the lowest validation RMSE of the predictive mean (ties:
// smaller lambda), then the length scale maximizing the MC Gaussian
// predictive log-likelihood under that lambda (ties: smaller l), and returns
// the resulting precision. Targets are in network output units.
TauCalibration calibrate_tau(std::span<const double> l_grid, std::span<const double> lambda_grid,
                             std::span<const double> validation_targets, double p_keep,
                             std::size_t n_train, const LambdaEvaluator& evaluate);

// Trains one regression network per lambda on `train` and scores it on
// `validation` with `passes` MC passes.
TauCalibration calibrate_tau(const NetworkSpec& base, const TrainingData& train,
                             const TrainingData& validation, const TrainConfig& cfg,
                             std::span<const double> l_grid, std::span<const double> lambda_grid,
                             std::size_t passes, std::uint64_t seed);

}  // namespace mcdrive
