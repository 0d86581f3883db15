#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcdrive::cli {

// Every tunable of every subcommand. Defaults < config file < flags.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string track = "oval";
  std::string preset = "fast";
  std::string arch = "classification";
  double p_drop = 0.05;
  double l2_lambda = 1e-6;
  std::size_t passes = 128;
  double dt = 1.0 / 6.0;
  double speed = 6.7;
  double wheelbase = 2.5;

  // collect
  std::size_t frames = 7500;
  double test_fraction = 0.2;
  bool mirror = true;
  int perturb_interval = 30;
  double perturb_offset = 0.5;
  double perturb_heading_deg = 12.0;
  int crash_budget = 0;

  // train
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.05;

  // calibrate-tau
  std::vector<double> length_scales = {0.01, 0.1, 1.0, 10.0};
  std::vector<double> lambdas = {1e-6, 1e-5, 1e-4};
  double validation_fraction = 0.2;

  // precision used for regression variance; tau_file is a calibrate-tau output
  std::optional<double> tau;
  std::string tau_file;

  // eval-static
  std::size_t sample = 200;
  std::string oracle = "line";
  double max_fpr = 0.30;

  // drive
  double duration = 60.0;
  std::map<std::string, double> thresholds = {{"mi", 0.501}};
  std::string alert_rule = "single";
  std::string alert_measure = "mi";
  double start_s = 0.0;

  // eval-crash and plot
  std::vector<int> n_list = {1, 2, 3, 4, 5, 6};
  double window = 0.25;
  std::string measure = "mi";
  std::optional<double> peak_threshold;

  // paths
  std::string data;
  std::string model;
  std::string out;
  std::vector<std::string> traces;
  std::vector<std::string> roc;
  std::string trace;
};

std::string to_json(const RunConfig& cfg);
// Throws mcdrive::FormatError on unknown keys or wrong types.
RunConfig from_json(const std::string& text, const RunConfig& base = {});
RunConfig load_config(const std::filesystem::path& path);
void write_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace mcdrive::cli
