#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mcdrive/error.hpp"
#include "mcdrive/uncertainty.hpp"
#include "test_support.hpp"

using namespace mcdrive;
using mcdrive::testing::input_for;
using mcdrive::testing::tiny_classifier;

namespace {

PassSamples one_hot_rows(const std::vector<int>& labels, std::size_t classes) {
  std::vector<double> rows(labels.size() * classes, 0.0);
  for (std::size_t t = 0; t < labels.size(); ++t) rows[t * classes + static_cast<std::size_t>(labels[t])] = 1.0;
  return PassSamples::classification(labels.size(), classes, std::move(rows));
}

PassSamples random_rows(std::size_t passes, std::size_t classes, SplitMix64& rng, double sharpness) {
  std::vector<double> rows;
  rows.reserve(passes * classes);
  for (std::size_t t = 0; t < passes; ++t) {
    std::vector<double> z(classes);
    for (double& v : z) v = (rng.uniform() - 0.5) * sharpness;
    const auto p = softmax(z);
    rows.insert(rows.end(), p.begin(), p.end());
  }
  return PassSamples::classification(passes, classes, std::move(rows));
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return 0.5 * tv;
}

}  // namespace

TEST(PassSamples, ValidatesRows) {
  EXPECT_THROW(PassSamples::classification(1, 2, {0.7, 0.7}), NumericError);
  EXPECT_THROW(PassSamples::classification(1, 2, {1.5, -0.5}), NumericError);
  EXPECT_THROW(PassSamples::classification(2, 2, {0.5, 0.5}), ShapeError);
  EXPECT_THROW(PassSamples::regression({}), ShapeError);
}

TEST(PredictiveMean, Examples) {
  EXPECT_DOUBLE_EQ(predictive_mean(PassSamples::regression({1, 2, 3})), 2.0);
  EXPECT_EQ(predictive_mean(PassSamples::regression(std::vector<double>(128, 0.1234))), 0.1234);
  EXPECT_THROW(predictive_mean(one_hot_rows({0}, 2)), ShapeError);
}

TEST(PredictiveMean, MatchesReverseOrderSummation) {
  SplitMix64 rng(3);
  std::vector<double> v(128);
  for (double& x : v) x = (rng.uniform() - 0.5) * 2.0;
  double oracle = 0.0;
  for (auto it = v.rbegin(); it != v.rend(); ++it) oracle += *it;
  oracle /= 128.0;
  const double mean = predictive_mean(PassSamples::regression(v));
  EXPECT_NEAR(mean, oracle, 1e-12);
  EXPECT_GE(mean, *std::min_element(v.begin(), v.end()));
  EXPECT_LE(mean, *std::max_element(v.begin(), v.end()));
}

TEST(PredictiveVariance, ConstantSamplesGiveInverseTau) {
  const double tau = 0.00328;
  const double var = predictive_variance(PassSamples::regression(std::vector<double>(128, 0.3)), tau);
  EXPECT_EQ(var, 1.0 / tau);
  EXPECT_NEAR(var, 304.878, 1e-3);
}

TEST(PredictiveVariance, AnalyticTwoPoint) {
  EXPECT_DOUBLE_EQ(predictive_variance(PassSamples::regression({1, 3}),
                                       std::numeric_limits<double>::infinity()),
                   1.0);
}

TEST(PredictiveVariance, MatchesTwoPassOracle) {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(128);
    for (double& x : v) x = 10.0 * rng.uniform() - 3.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= 128.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double tau = 0.5 + rng.uniform();
    EXPECT_NEAR(predictive_variance(PassSamples::regression(v), tau), 1.0 / tau + ss / 128.0, 1e-10);
  }
}

TEST(PredictiveVariance, Errors) {
  EXPECT_THROW(predictive_variance(PassSamples::regression({1.0}), 0.0), NumericError);
  EXPECT_THROW(predictive_variance(PassSamples::regression({1.0}), -1.0), NumericError);
  EXPECT_THROW(predictive_variance(one_hot_rows({0}, 2), 1.0), ShapeError);
}

TEST(PredictiveVariance, SinglePassIsInverseTau) {
  EXPECT_EQ(predictive_variance(PassSamples::regression({0.7}), 4.0), 0.25);
}

TEST(ComputeTau, Examples) {
  EXPECT_DOUBLE_EQ(compute_tau(1.0, 1.0, 1, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(compute_tau(1.0, 0.9, 100, 2e-3), 2.0 * compute_tau(1.0, 0.9, 100, 4e-3));
  EXPECT_DOUBLE_EQ(compute_tau(2.0, 0.9, 100, 2e-3), 4.0 * compute_tau(1.0, 0.9, 100, 2e-3));
  // l^2 p / (2 N lambda) = 1e-4 * 0.95 / (2 * 19597 * 1e-6)
  EXPECT_NEAR(compute_tau(0.01, 0.95, 19597, 1e-6), 0.0024239, 1e-7);
}

TEST(ComputeTau, RejectsNonPositive) {
  EXPECT_THROW(compute_tau(0.0, 1.0, 1, 1.0), NumericError);
  EXPECT_THROW(compute_tau(1.0, 0.0, 1, 1.0), NumericError);
  EXPECT_THROW(compute_tau(1.0, 1.5, 1, 1.0), NumericError);
  EXPECT_THROW(compute_tau(1.0, 1.0, 0, 1.0), NumericError);
  EXPECT_THROW(compute_tau(1.0, 1.0, 1, 0.0), NumericError);
}

TEST(ModeAndFrequency, Examples) {
  auto m = mode_and_freq(one_hot_rows({2, 2, 7, 2}, 10));
  EXPECT_EQ(m.mode_class, 2);
  EXPECT_EQ(m.frequency, 3u);
  m = mode_and_freq(one_hot_rows({1, 1, 2, 2}, 10));
  EXPECT_EQ(m.mode_class, 1);
  EXPECT_EQ(m.frequency, 2u);
  m = mode_and_freq(one_hot_rows(std::vector<int>(9, 5), 10));
  EXPECT_EQ(m.mode_class, 5);
  EXPECT_EQ(m.frequency, 9u);
  EXPECT_THROW(mode_and_freq(PassSamples::regression({1.0})), ShapeError);
}

TEST(ModeAndFrequency, RowArgmaxTiesGoToLowestClass) {
  const auto s = PassSamples::classification(1, 3, {0.25, 0.375, 0.375});
  EXPECT_EQ(mode_and_freq(s).mode_class, 1);
}

TEST(VariationRatio, Examples) {
  EXPECT_EQ(variation_ratio(one_hot_rows(std::vector<int>(128, 3), 5)), 0.0);
  std::vector<int> labels(128, 0);
  for (int i = 0; i < 32; ++i) labels[static_cast<std::size_t>(i)] = 1 + i % 3;
  EXPECT_DOUBLE_EQ(variation_ratio(one_hot_rows(labels, 5)), 0.25);
  EXPECT_THROW(variation_ratio(PassSamples::regression({1.0})), ShapeError);
}

// Expected dispersion of uniformly random labels, estimated by simulating
// the multinomial directly.
TEST(VariationRatio, UniformLabelsMatchMultinomialSimulation) {
  const std::size_t classes = 200;
  const std::size_t passes = 10000;
  SplitMix64 rng(2024);
  double expected_max = 0.0;
  const int sims = 200;
  for (int s = 0; s < sims; ++s) {
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t t = 0; t < passes; ++t) ++counts[rng.below(classes)];
    expected_max += static_cast<double>(*std::max_element(counts.begin(), counts.end()));
  }
  expected_max /= sims;
  const double oracle = 1.0 - expected_max / static_cast<double>(passes);

  std::vector<int> labels(passes);
  SplitMix64 draw(99);
  for (int& l : labels) l = static_cast<int>(draw.below(classes));
  EXPECT_NEAR(variation_ratio(one_hot_rows(labels, classes)), oracle, 0.01);
}

TEST(PredictiveEntropy, Examples) {
  EXPECT_EQ(predictive_entropy(one_hot_rows({4, 4, 4}, 6)), 0.0);
  const auto uniform = PassSamples::classification(2, 200, std::vector<double>(400, 1.0 / 200.0));
  EXPECT_NEAR(predictive_entropy(uniform), std::log(200.0), 1e-9);
  EXPECT_NEAR(std::log(200.0), 5.29832, 1e-5);
  EXPECT_NEAR(predictive_entropy(one_hot_rows({0, 1}, 2)), std::log(2.0), 1e-12);
  EXPECT_THROW(predictive_entropy(PassSamples::regression({1.0})), ShapeError);
}

TEST(MutualInformation, Examples) {
  const auto same = PassSamples::classification(3, 3, {0.2, 0.5, 0.3, 0.2, 0.5, 0.3, 0.2, 0.5, 0.3});
  EXPECT_EQ(mutual_information(same), 0.0);
  EXPECT_NEAR(mutual_information(one_hot_rows({0, 0, 3, 3}, 5)), std::log(2.0), 1e-12);
  const auto uniform = PassSamples::classification(4, 200, std::vector<double>(800, 1.0 / 200.0));
  EXPECT_EQ(mutual_information(uniform), 0.0);
  EXPECT_THROW(mutual_information(PassSamples::regression({1.0})), ShapeError);
}

TEST(Measures, JensenOrderingOnRandomMatrices) {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t classes = 2 + rng.below(30);
    const std::size_t passes = 1 + rng.below(40);
    const auto s = random_rows(passes, classes, rng, 1.0 + 20.0 * rng.uniform());
    const double h = predictive_entropy(s);
    const double mi = mutual_information(s);
    EXPECT_GE(mi, 0.0);
    EXPECT_LE(mi, h);
    EXPECT_LE(h, std::log(static_cast<double>(classes)) + 1e-12);
    const double vr = variation_ratio(s);
    EXPECT_GE(vr, 0.0);
    EXPECT_LE(vr, 1.0 - 1.0 / static_cast<double>(passes) + 1e-15);
  }
}

TEST(Measures, VariationRatioZeroIffLabelsAgree) {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = random_rows(1 + rng.below(8), 3, rng, 4.0);
    std::vector<std::size_t> labels;
    for (std::size_t t = 0; t < s.passes(); ++t) {
      const auto r = s.row(t);
      labels.push_back(static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin()));
    }
    const bool agree = std::all_of(labels.begin(), labels.end(), [&](auto l) { return l == labels[0]; });
    EXPECT_EQ(variation_ratio(s) == 0.0, agree);
  }
}

TEST(Measures, InvariantUnderPassPermutation) {
  SplitMix64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t passes = 2 + rng.below(30);
    const std::size_t classes = 2 + rng.below(10);
    const auto s = random_rows(passes, classes, rng, 8.0);
    std::vector<std::size_t> perm(passes);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = passes; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<double> rows;
    for (std::size_t t : perm) rows.insert(rows.end(), s.row(t).begin(), s.row(t).end());
    const auto p = PassSamples::classification(passes, classes, rows);
    EXPECT_EQ(variation_ratio(p), variation_ratio(s));
    EXPECT_NEAR(predictive_entropy(p), predictive_entropy(s), 1e-12);
    EXPECT_NEAR(mutual_information(p), mutual_information(s), 1e-12);

    std::vector<double> reg(passes);
    for (double& v : reg) v = rng.uniform();
    std::vector<double> reg_perm;
    for (std::size_t t : perm) reg_perm.push_back(reg[t]);
    EXPECT_NEAR(predictive_variance(PassSamples::regression(reg_perm), 2.0),
                predictive_variance(PassSamples::regression(reg), 2.0), 1e-12);
  }
}

TEST(Measures, VarianceAboveNoiseFloorUnlessConstant) {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(2 + rng.below(20));
    for (double& x : v) x = rng.uniform();
    EXPECT_GT(predictive_variance(PassSamples::regression(v), 3.0), 1.0 / 3.0);
  }
}

TEST(McSamples, ZeroDropoutCollapses) {
  const Network net = Network::initialize(mcdrive::testing::small_conv_classifier(0.0), 3);
  const Tensor x = input_for(net, 4);
  const Tensor det = forward(net, x, ForwardMode::Deterministic);
  const auto s = mc_samples(net, x, 16, 9);
  for (std::size_t t = 0; t < 16; ++t) {
    for (std::size_t c = 0; c < s.classes(); ++c) EXPECT_EQ(s.row(t)[c], det[c]);
  }
  EXPECT_EQ(variation_ratio(s), 0.0);
  EXPECT_EQ(mutual_information(s), 0.0);
  EXPECT_EQ(predictive_entropy(s), entropy(det.values()));

  const Network reg = Network::initialize(mcdrive::testing::small_conv_regressor(0.0), 3);
  EXPECT_EQ(predictive_variance(mc_samples(reg, x, 32, 1), 0.25), 4.0);
}

TEST(McSamples, DeterministicGivenSeed) {
  const Network net = Network::initialize(mcdrive::testing::small_conv_classifier(0.3), 3);
  const Tensor x = input_for(net, 4);
  const auto a = mc_samples(net, x, 8, 5);
  const auto b = mc_samples(net, x, 8, 5);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(ExactDistribution, NoDroppableUnitsIsDeterministicOutput) {
  const Network net = Network::initialize(tiny_classifier(4, 0.0), 2);
  const Tensor x = input_for(net, 1);
  const auto exact = exact_predictive_distribution(net, x);
  const Tensor det = forward(net, x, ForwardMode::Deterministic);
  EXPECT_EQ(exact, det.values());
}

TEST(ExactDistribution, SingleUnitAveragesTwoMasks) {
  const Network net = Network::initialize(tiny_classifier(1, 0.5, 3, 1), 6);
  const Tensor x = input_for(net, 3);
  const Tensor q0 = forward_masked(net, x, DropoutMasks{{0}});
  const Tensor q1 = forward_masked(net, x, DropoutMasks{{1}});
  const auto exact = exact_predictive_distribution(net, x);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(exact[c], 0.5 * q0[c] + 0.5 * q1[c], 1e-15);
}

TEST(ExactDistribution, RejectsLargeNetworks) {
  const Network net = Network::initialize(tiny_classifier(11, 0.2), 1);
  EXPECT_THROW(exact_predictive_distribution(net, input_for(net, 1)), ShapeError);
  const Network reg = Network::initialize(mcdrive::testing::small_conv_regressor(0.1), 1);
  EXPECT_THROW(exact_predictive_distribution(reg, input_for(reg, 1)), ShapeError);
}

// Monte Carlo average of the softmax rows converges to the mask enumeration.
TEST(ExactDistribution, MonteCarloConverges) {
  const Network net = Network::initialize(tiny_classifier(5, 0.3), 42);
  ASSERT_EQ(droppable_units(net.spec()), 10u);
  for (std::uint64_t k = 0; k < 3; ++k) {
    const Tensor x = mcdrive::testing::random_tensor({1, 4, 1}, 100 + k, -2.0, 2.0);
    const auto exact = exact_predictive_distribution(net, x);
    EXPECT_NEAR(std::accumulate(exact.begin(), exact.end(), 0.0), 1.0, 1e-12);
    const auto s = mc_samples(net, x, 10000, 7 + k);
    EXPECT_LE(total_variation(mean_distribution(s), exact), 0.02);
  }
}

TEST(CalibrateTau, SingleElementGrids) {
  const std::vector<double> l{0.5};
  const std::vector<double> lambda{1e-3};
  const std::vector<double> targets{0.1, 0.2};
  auto eval = [](double) {
    return std::vector<PassSamples>{PassSamples::regression({0.1, 0.2}),
                                    PassSamples::regression({0.2, 0.3})};
  };
  const auto cal = calibrate_tau(l, lambda, targets, 0.95, 1000, eval);
  EXPECT_DOUBLE_EQ(cal.params.tau, compute_tau(0.5, 0.95, 1000, 1e-3));
  EXPECT_THROW(calibrate_tau({}, lambda, targets, 0.95, 1000, eval), ShapeError);
  EXPECT_THROW(calibrate_tau(l, {}, targets, 0.95, 1000, eval), ShapeError);
}

TEST(CalibrateTau, OperatingPointIsSelectable) {
  const std::vector<double> l{0.01, 0.1, 1.0};
  const std::vector<double> lambda{1e-6, 1e-5, 1e-4};
  const std::vector<double> targets{0.0, 0.0, 0.0};
  // Predictions spread far enough that a large noise term (small l) fits best.
  auto eval = [](double lam) {
    const double off = lam == 1e-6 ? 0.0 : 1.0;
    std::vector<PassSamples> out;
    for (int i = 0; i < 3; ++i) out.push_back(PassSamples::regression({off - 5.0, off + 5.0}));
    return out;
  };
  const auto cal = calibrate_tau(l, lambda, targets, 0.95, 19597, eval);
  EXPECT_DOUBLE_EQ(cal.params.lambda, 1e-6);
  EXPECT_DOUBLE_EQ(cal.params.length_scale, 0.01);
  EXPECT_DOUBLE_EQ(cal.params.tau, compute_tau(0.01, 0.95, 19597, 1e-6));
  EXPECT_EQ(cal.lambda_rmse.size(), 3u);
  EXPECT_EQ(cal.length_scale_ll.size(), 3u);
}

TEST(CalibrateTau, TiesGoToSmallerLambda) {
  const std::vector<double> l{1.0};
  const std::vector<double> lambda{1e-2, 1e-4, 1e-3};
  const std::vector<double> targets{0.0};
  auto eval = [](double) { return std::vector<PassSamples>{PassSamples::regression({0.5})}; };
  EXPECT_DOUBLE_EQ(calibrate_tau(l, lambda, targets, 1.0, 10, eval).params.lambda, 1e-4);
}

// Targets are noise independent of the inputs, so an unregularized network
// can only overfit while a heavily regularized one collapses to a constant.
TEST(CalibrateTau, TrainedGridPrefersRegularizationOnPureNoise) {
  NetworkSpec spec;
  spec.head = HeadKind::Regression;
  spec.input = {1, 16, 1};
  spec.layers = {LayerSpec::flatten(), LayerSpec::dense(16), LayerSpec::relu(),
                 LayerSpec::dense(1)};
  SplitMix64 rng(8);
  std::vector<float> train_px(12 * 16), val_px(200 * 16);
  for (float& v : train_px) v = static_cast<float>(2.0 * rng.uniform() - 1.0);
  for (float& v : val_px) v = static_cast<float>(2.0 * rng.uniform() - 1.0);
  TrainingData train{spec.input, train_px, {}, {}};
  TrainingData val{spec.input, val_px, {}, {}};
  for (int i = 0; i < 12; ++i) train.targets.push_back(rng.uniform() - 0.5);
  for (int i = 0; i < 200; ++i) val.targets.push_back(rng.uniform() - 0.5);
  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.batch_size = 12;
  cfg.learning_rate = 0.1;
  const std::vector<double> l{0.1};
  const std::vector<double> lambda{0.0 + 1e-9, 1.0};
  const auto cal = calibrate_tau(spec, train, val, cfg, l, lambda, 2, 3);
  ASSERT_EQ(cal.lambda_rmse.size(), 2u);
  EXPECT_GT(cal.lambda_rmse[0].second, cal.lambda_rmse[1].second);
  EXPECT_DOUBLE_EQ(cal.params.lambda, 1.0);
}

TEST(Summarize, ClassificationReport) {
  std::vector<int> labels(128, 100);
  for (int i = 0; i < 32; ++i) labels[static_cast<std::size_t>(i)] = 104;
  const auto r = summarize(one_hot_rows(labels, 200), 1.0);
  EXPECT_EQ(r.mode_class, 100);
  EXPECT_EQ(r.mode_freq, 96u);
  EXPECT_DOUBLE_EQ(r.prediction_deg, 0.0);
  EXPECT_DOUBLE_EQ(r.variation_ratio, 0.25);
  EXPECT_LE(r.mutual_information, r.entropy);
}

TEST(Summarize, RegressionReportUsesDegrees) {
  const auto r = summarize(PassSamples::regression({0.1, 0.3}), std::numeric_limits<double>::infinity());
  EXPECT_NEAR(r.prediction_deg, 5.0, 1e-12);
  EXPECT_NEAR(r.variance, 6.25, 1e-12);
}
