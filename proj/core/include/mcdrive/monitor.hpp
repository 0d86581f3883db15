#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mcdrive/network.hpp"
#include "mcdrive/simulator.hpp"
#include "mcdrive/uncertainty.hpp"

namespace mcdrive {

enum class Measure { VariationRatio, Entropy, MutualInformation, Variance };

inline constexpr std::array<Measure, 4> kAllMeasures = {
    Measure::VariationRatio, Measure::Entropy, Measure::MutualInformation, Measure::Variance};

// Short names used in trace columns and file names: vr, entropy, mi, variance.
std::string to_string(Measure m);
Measure parse_measure(const std::string& text);
// Measures a head produces: variance for regression, vr/entropy/mi for
// classification.
std::vector<Measure> measures_for(HeadKind head);

enum class AlertRule { Any, All, Single };

std::string to_string(AlertRule r);
AlertRule parse_alert_rule(const std::string& text);

struct TraceRow {
  std::int64_t frame = 0;
  double t = 0.0;
  double angle_deg = 0.0;
  std::array<std::optional<double>, 4> measures;  // indexed by Measure
  bool crashed = false;
  bool alert = false;

  std::optional<double> value(Measure m) const { return measures[static_cast<std::size_t>(m)]; }
  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

// Per-measure thresholds with a combination rule. A measure fires when its
// value is at least its threshold; measures without a threshold or without a
// value never fire. Thresholds may be infinite but not NaN.
class ThresholdSet {
 public:
  ThresholdSet() = default;
  static ThresholdSet single(Measure m, double threshold);

  void set(Measure m, double threshold);
  std::optional<double> get(Measure m) const { return values_[static_cast<std::size_t>(m)]; }
  // Single uses `measure`, which must have a threshold.
  void set_rule(AlertRule rule, Measure measure = Measure::MutualInformation);
  AlertRule rule() const noexcept { return rule_; }
  Measure single_measure() const noexcept { return single_; }

  bool fires(const TraceRow& row) const;

 private:
  std::array<std::optional<double>, 4> values_{};
  AlertRule rule_ = AlertRule::Any;
  Measure single_ = Measure::MutualInformation;
};

struct TraceMeta {
  std::string model;
  std::string head;
  std::string track;
  std::size_t passes = 0;
  double tau = 0.0;
  ThresholdSet thresholds;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double speed = 0.0;
  double duration = 0.0;
  std::size_t crashes = 0;
  std::size_t alerts = 0;
  double fps = 0.0;  // wall-clock frames per second, not reproducible
};

struct DriveTrace {
  std::vector<TraceRow> rows;
  TraceMeta meta;

  std::vector<std::size_t> crash_rows() const;
  std::size_t alert_count() const;
};

struct MonitorConfig {
  double duration = 60.0;  // simulated seconds
  std::size_t passes = kDefaultPasses;
  std::uint64_t seed = 0;
  double tau = std::numeric_limits<double>::infinity();
  ThresholdSet thresholds;
  SimConfig sim;
  double start_s = 0.0;
  std::string model_id;
};

// Closed-loop drive steered by the network's MC prediction (mean for
// regression, modal bucket for classification). The camera resolution is
// taken from the network input. When `events` is non-null one JSON object per
// crash and alert is written to it as the drive runs.
DriveTrace run_monitored_drive(const Network& net, const Track& track, const MonitorConfig& cfg,
                               std::ostream* events = nullptr);

// Recomputes the alert column under new thresholds.
DriveTrace replay(const DriveTrace& trace, const ThresholdSet& thresholds);

void write_trace_csv(const DriveTrace& trace, const std::filesystem::path& path);
std::vector<TraceRow> read_trace_csv(const std::filesystem::path& path);
std::string trace_meta_json(const TraceMeta& meta);
TraceMeta trace_meta_from_json(const std::string& text);
// `<stem>.csv` plus `<stem>.json`.
void save_trace(const DriveTrace& trace, const std::filesystem::path& csv_path);
DriveTrace load_trace(const std::filesystem::path& csv_path);

std::string thresholds_json(const ThresholdSet& t);
ThresholdSet thresholds_from_json(const std::string& text);

}  // namespace mcdrive
