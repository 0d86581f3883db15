#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcdrive/dataset.hpp"
#include "mcdrive/monitor.hpp"

namespace mcdrive {

// positive = unsafe or crashed.
struct ScoredSample {
  double score = 0.0;
  bool positive = false;
};

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

// Points in order of decreasing threshold: +inf, every distinct score, -inf.
// A sample is predicted positive when its score is >= the threshold.
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

RocCurve roc_curve(std::span<const ScoredSample> samples);

struct ThresholdChoice {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double max_fpr = 0.0;
  bool fallback = false;  // no finite threshold met max_fpr; min-fpr point returned
  std::string policy() const;
};

// Highest tpr among finite-threshold points with fpr <= max_fpr; ties go to
// lower fpr, then higher threshold.
ThresholdChoice select_threshold(const RocCurve& curve, double max_fpr = 0.30);

struct MetricOneConfig {
  std::size_t sample_n = 200;
  OracleMode oracle = OracleMode::Line;
  std::uint64_t seed = 0;
  std::size_t passes = kDefaultPasses;
  double tau = std::numeric_limits<double>::infinity();
};

struct MetricOneResult {
  std::vector<std::size_t> indices;
  std::vector<double> predicted_deg;
  std::vector<bool> unsafe;
  std::map<Measure, std::vector<ScoredSample>> samples;
  std::map<Measure, RocCurve> curves;
};

// Labels sampled test frames by whether the network's predicted angle keeps
// the car on the road, and scores them with every measure of the head. The
// test set must carry simulator states recorded on `track`.
MetricOneResult metric_one(const Network& net, const Dataset& test, const Track& track,
                           const MetricOneConfig& cfg = {});

struct CrashWindowSet {
  int n_seconds = 0;
  double window = 0.25;
  std::vector<std::size_t> positive_rows;
  std::vector<std::size_t> negative_rows;
  std::size_t crashes_used = 0;
  std::size_t crashes_skipped = 0;
  std::size_t anchors = 0;
};

inline constexpr double kAnchorMargin = 2.0;

// Positives: rows with t in [c - n - window, c - n + window] for each crash at
// time c with enough history. Negatives: the same offsets before anchor rows
// with no crash in [a - n - window - 2, a + 2], one anchor per used crash,
// anchors drawn uniformly with non-overlapping windows.
CrashWindowSet extract_crash_windows(const DriveTrace& trace, int n_seconds, double window = 0.25,
                                     std::uint64_t seed = 0);

std::vector<ScoredSample> window_samples(const DriveTrace& trace, const CrashWindowSet& set,
                                         Measure measure);

struct CrashRocEntry {
  int n_seconds = 0;
  RocCurve curve;
  ThresholdChoice choice;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t crashes = 0;
};

struct CrashRocSuite {
  Measure measure = Measure::MutualInformation;
  std::vector<CrashRocEntry> entries;
  int best_n = 0;  // highest AUC, ties to smaller n
};

CrashRocSuite crash_roc_suite(std::span<const DriveTrace> traces,
                              std::span<const int> n_list = std::span<const int>(),
                              Measure measure = Measure::MutualInformation, double window = 0.25,
                              std::uint64_t seed = 0, double max_fpr = 0.30);

inline constexpr int kPeakWindowFrames = 60;

struct PeakRow {
  std::size_t crash_id = 0;
  std::int64_t crash_frame = 0;
  std::optional<std::int64_t> first_breach_frames;
  std::optional<double> first_breach_seconds;
  std::int64_t peak_frames = 0;
  double peak_seconds = 0.0;
};

// For each crash, distances from the first threshold crossing and from the
// (earliest) maximum of the measure within the 60 frames before the crash.
std::vector<PeakRow> peak_analysis(const DriveTrace& trace, double threshold,
                                   Measure measure = Measure::MutualInformation);

double rmse(std::span<const double> predicted, std::span<const double> target);
double accuracy(std::span<const int> predicted, std::span<const int> target);

struct ModelMetrics {
  HeadKind head = HeadKind::Regression;
  std::size_t count = 0;
  // Regression, normalized (degrees / 25) and degrees.
  double rmse_mc = 0.0;
  double rmse_deterministic = 0.0;
  double rmse_mc_deg = 0.0;
  double rmse_deterministic_deg = 0.0;
  // Classification, exact bucket matches.
  double accuracy_mc = 0.0;
  double accuracy_deterministic = 0.0;
};

ModelMetrics report_metrics(const Network& net, const Dataset& test,
                            std::size_t passes = kDefaultPasses, std::uint64_t seed = 0);

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path);
std::vector<RocPoint> read_roc_csv(const std::filesystem::path& path);
std::string roc_summary_json(const RocCurve& curve, const ThresholdChoice& choice);
void write_peak_csv(const std::vector<PeakRow>& rows, const std::filesystem::path& path);

}  // namespace mcdrive
