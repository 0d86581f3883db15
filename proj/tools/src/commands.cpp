#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcdrive/dataset.hpp"
#include "mcdrive/error.hpp"
#include "mcdrive/evalkit.hpp"
#include "mcdrive/model_io.hpp"
#include "mcdrive/monitor.hpp"
#include "mcdrive/presets.hpp"
#include "mcdrive/rng.hpp"
#include "mcdrive/train.hpp"
#include "mcdrive/uncertainty.hpp"
#include "run_config.hpp"
#include "svg.hpp"

namespace mcdrive::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Missing inputs map to exit status 1 like any other runtime failure.
void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw Error(std::string("no ") + what + " given");
  if (!fs::exists(path)) throw Error(std::string(what) + " not found: " + path);
}

void require_out(const std::string& out) {
  if (out.empty()) throw Error("no --out given");
}

double parse_double(const std::string& text, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || std::isnan(v)) {
    throw FormatError("invalid number for " + what + ": '" + text + "'");
  }
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path sidecar(const fs::path& file, const std::string& suffix) {
  fs::path p = file;
  p.replace_extension(suffix);
  return p;
}

// Finite numbers stay numbers; infinities become "inf" / "-inf".
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

SimConfig sim_config(const RunConfig& cfg) {
  SimConfig sim;
  sim.dt = cfg.dt;
  sim.speed = cfg.speed;
  sim.wheelbase = cfg.wheelbase;
  return sim;
}

NetworkSpec preset_spec(const RunConfig& cfg, HeadKind head) {
  NetworkSpec spec = build_preset(head, parse_preset_scale(cfg.preset), cfg.p_drop);
  spec.l2_lambda = cfg.l2_lambda;
  return spec;
}

TrainConfig train_config(const RunConfig& cfg, HeadKind head) {
  TrainConfig t;
  t.epochs = cfg.epochs;
  t.batch_size = cfg.batch_size;
  t.learning_rate = cfg.learning_rate;
  t.seed = cfg.seed;
  t.loss = default_loss(head);
  return t;
}

// `dir/<side>` when the directory holds a collected split, else `dir`.
Dataset load_side(const std::string& dir, const char* side) {
  require_path(dir, "dataset");
  const fs::path sub = fs::path(dir) / side;
  return load_dataset(fs::exists(sub / "meta.json") ? sub : fs::path(dir));
}

double resolve_tau(const RunConfig& cfg) {
  if (cfg.tau) {
    if (!(*cfg.tau > 0.0)) throw NumericError("tau must be positive");
    return *cfg.tau;
  }
  if (!cfg.tau_file.empty()) {
    require_path(cfg.tau_file, "tau file");
    const json j = json::parse(read_text(cfg.tau_file));
    return j.at("tau").get<double>();
  }
  return std::numeric_limits<double>::infinity();
}

ThresholdSet threshold_set(const RunConfig& cfg) {
  ThresholdSet t;
  for (const auto& [name, value] : cfg.thresholds) t.set(parse_measure(name), value);
  t.set_rule(parse_alert_rule(cfg.alert_rule), parse_measure(cfg.alert_measure));
  return t;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

// --- subcommands ---------------------------------------------------------

void run_collect(const RunConfig& cfg) {
  require_out(cfg.out);
  const Track track = resolve_track(cfg.track);
  const InputShape shape = build_preset(HeadKind::Classification, parse_preset_scale(cfg.preset)).input;
  CollectConfig cc;
  cc.sim = sim_config(cfg);
  cc.sim.camera.height = shape.height;
  cc.sim.camera.width = shape.width;
  cc.perturb_interval = cfg.perturb_interval;
  cc.perturb_offset = cfg.perturb_offset;
  cc.perturb_heading_deg = cfg.perturb_heading_deg;
  cc.crash_budget = cfg.crash_budget;

  Dataset all = collect_run(track, Policy::expert(), cfg.frames, cfg.seed, cc);
  all.source = cfg.track;
  Split s = split(all, cfg.test_fraction, derive_seed(cfg.seed, 1));
  Dataset train = cfg.mirror ? augment_mirror(s.train) : std::move(s.train);

  const fs::path out(cfg.out);
  save_dataset(train, out / "train");
  save_dataset(s.test, out / "test");
  write_config(cfg, out / "config.json");
  log_line("collected " + std::to_string(all.size()) + " frames: train " +
           std::to_string(train.size()) + ", test " + std::to_string(s.test.size()));
}

void run_train(const RunConfig& cfg) {
  require_out(cfg.out);
  const HeadKind head = parse_head_kind(cfg.arch);
  const Dataset data = load_side(cfg.data, "train");
  const NetworkSpec spec = preset_spec(cfg, head);
  if (!(data.shape() == spec.input)) {
    throw ShapeError("dataset frames do not match the " + cfg.preset + " preset input");
  }
  const TrainingData view = training_view(data, head);
  Network init = Network::initialize(spec, cfg.seed);
  const auto start = std::chrono::steady_clock::now();
  TrainResult r = train(std::move(init), view, train_config(cfg, head), [&](int epoch, double l) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream msg;
    msg << "epoch " << epoch << " loss " << l << " (" << s << " s)";
    log_line(msg.str());
  });

  const fs::path out(cfg.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_model(r.network, out);
  std::ostringstream csv;
  csv << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < r.loss_history.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e, r.loss_history[e]);
    csv << buf;
  }
  write_text(sidecar(out, ".loss.csv"), csv.str());
  write_config(cfg, sidecar(out, ".config.json"));
}

void run_calibrate(const RunConfig& cfg) {
  require_out(cfg.out);
  const Dataset data = load_side(cfg.data, "train");
  Split s = split(data, cfg.validation_fraction, derive_seed(cfg.seed, 2));
  const NetworkSpec base = preset_spec(cfg, HeadKind::Regression);
  if (!(data.shape() == base.input)) {
    throw ShapeError("dataset frames do not match the " + cfg.preset + " preset input");
  }
  const TrainingData train = training_view(s.train, HeadKind::Regression);
  const TrainingData val = training_view(s.test, HeadKind::Regression);
  const TauCalibration cal =
      calibrate_tau(base, train, val, train_config(cfg, HeadKind::Regression), cfg.length_scales,
                    cfg.lambdas, cfg.passes, cfg.seed);

  json j;
  j["tau"] = number(cal.params.tau);
  j["length_scale"] = cal.params.length_scale;
  j["lambda"] = cal.params.lambda;
  j["p_keep"] = cal.params.p_keep;
  j["n_train"] = cal.params.n_train;
  j["lambda_rmse"] = json::array();
  for (const auto& [l, r] : cal.lambda_rmse) j["lambda_rmse"].push_back({{"lambda", l}, {"rmse", number(r)}});
  j["length_scale_log_likelihood"] = json::array();
  for (const auto& [l, ll] : cal.length_scale_ll) {
    j["length_scale_log_likelihood"].push_back({{"length_scale", l}, {"log_likelihood", number(ll)}});
  }
  const fs::path out(cfg.out);
  write_text(out, j.dump(2) + "\n");
  write_config(cfg, sidecar(out, ".config.json"));
  log_line("tau " + std::to_string(cal.params.tau));
}

void run_eval_static(const RunConfig& cfg) {
  require_out(cfg.out);
  require_path(cfg.model, "model");
  const Network net = load_model(cfg.model);
  const Dataset test = load_side(cfg.data, "test");
  const Track track = resolve_track(cfg.track);
  if (test.source != cfg.track && test.source != track.name()) {
    throw Error("dataset was recorded on '" + test.source + "', not '" + cfg.track + "'");
  }
  MetricOneConfig mc;
  mc.sample_n = cfg.sample;
  mc.oracle = parse_oracle_mode(cfg.oracle);
  mc.seed = cfg.seed;
  mc.passes = cfg.passes;
  mc.tau = resolve_tau(cfg);
  const MetricOneResult r = metric_one(net, test, track, mc);

  const fs::path out(cfg.out);
  fs::create_directories(out);
  json summary;
  summary["sample"] = r.indices.size();
  std::size_t unsafe = 0;
  for (bool u : r.unsafe) unsafe += u;
  summary["unsafe"] = unsafe;
  summary["oracle"] = cfg.oracle;
  summary["measures"] = json::object();
  for (const auto& [m, curve] : r.curves) {
    write_roc_csv(curve, out / ("roc_" + to_string(m) + ".csv"));
    summary["measures"][to_string(m)] =
        json::parse(roc_summary_json(curve, select_threshold(curve, cfg.max_fpr)));
    log_line(to_string(m) + " AUC " + std::to_string(curve.auc));
  }
  std::ostringstream frames;
  frames << "index,predicted_deg,unsafe";
  for (const auto& [m, _] : r.samples) frames << ',' << to_string(m);
  frames << '\n';
  char buf[64];
  for (std::size_t i = 0; i < r.indices.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d", r.indices[i], r.predicted_deg[i],
                  r.unsafe[i] ? 1 : 0);
    frames << buf;
    for (const auto& [m, s] : r.samples) {
      std::snprintf(buf, sizeof buf, ",%.17g", s[i].score);
      frames << buf;
    }
    frames << '\n';
  }
  write_text(out / "frames.csv", frames.str());
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_config(cfg, out / "config.json");
}

void run_drive(const RunConfig& cfg) {
  require_out(cfg.out);
  require_path(cfg.model, "model");
  const Network net = load_model(cfg.model);
  const Track track = resolve_track(cfg.track);
  MonitorConfig mc;
  mc.duration = cfg.duration;
  mc.passes = cfg.passes;
  mc.seed = cfg.seed;
  mc.tau = resolve_tau(cfg);
  mc.thresholds = threshold_set(cfg);
  mc.sim = sim_config(cfg);
  mc.start_s = cfg.start_s;
  mc.model_id = fs::path(cfg.model).filename().string();
  const DriveTrace trace = run_monitored_drive(net, track, mc, &std::cout);
  std::cout.flush();

  fs::path out(cfg.out);
  if (out.extension() != ".csv") out += ".csv";
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_trace(trace, out);
  write_config(cfg, sidecar(out, ".config.json"));
  std::ostringstream msg;
  msg << "frames " << trace.rows.size() << " crashes " << trace.meta.crashes << " alerts "
      << trace.meta.alerts << " fps " << trace.meta.fps;
  log_line(msg.str());
}

void run_eval_crash(const RunConfig& cfg) {
  require_out(cfg.out);
  if (cfg.traces.empty()) throw Error("no --trace given");
  std::vector<DriveTrace> traces;
  for (const auto& p : cfg.traces) {
    require_path(p, "trace");
    traces.push_back(load_trace(p));
  }
  const Measure measure = parse_measure(cfg.measure);
  const CrashRocSuite suite =
      crash_roc_suite(traces, cfg.n_list, measure, cfg.window, cfg.seed, cfg.max_fpr);

  const fs::path out(cfg.out);
  fs::create_directories(out);
  json summary;
  summary["measure"] = cfg.measure;
  summary["best_n"] = suite.best_n;
  summary["entries"] = json::array();
  double best_threshold = std::numeric_limits<double>::quiet_NaN();
  for (const auto& e : suite.entries) {
    write_roc_csv(e.curve, out / ("roc_n" + std::to_string(e.n_seconds) + ".csv"));
    json entry = json::parse(roc_summary_json(e.curve, e.choice));
    entry["n_seconds"] = e.n_seconds;
    entry["crashes"] = e.crashes;
    summary["entries"].push_back(entry);
    if (e.n_seconds == suite.best_n) best_threshold = e.choice.threshold;
    log_line("n=" + std::to_string(e.n_seconds) + " AUC " + std::to_string(e.curve.auc));
  }
  const double peak_threshold = cfg.peak_threshold.value_or(best_threshold);
  summary["peak_threshold"] = number(peak_threshold);
  std::vector<PeakRow> peaks;
  for (const auto& t : traces) {
    auto rows = peak_analysis(t, peak_threshold, measure);
    for (auto& r : rows) {
      r.crash_id = peaks.size();
      peaks.push_back(r);
    }
  }
  write_peak_csv(peaks, out / "peaks.csv");
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_config(cfg, out / "config.json");
}

void run_report(const RunConfig& cfg) {
  require_path(cfg.model, "model");
  const Network net = load_model(cfg.model);
  const Dataset test = load_side(cfg.data, "test");
  const ModelMetrics m = report_metrics(net, test, cfg.passes, cfg.seed);
  json j;
  j["head"] = to_string(m.head);
  j["count"] = m.count;
  if (m.head == HeadKind::Regression) {
    j["rmse_mc"] = m.rmse_mc;
    j["rmse_deterministic"] = m.rmse_deterministic;
    j["rmse_mc_deg"] = m.rmse_mc_deg;
    j["rmse_deterministic_deg"] = m.rmse_deterministic_deg;
  } else {
    j["accuracy_mc"] = m.accuracy_mc;
    j["accuracy_deterministic"] = m.accuracy_deterministic;
  }
  const std::string text = j.dump(2) + "\n";
  if (cfg.out.empty()) {
    std::cout << text;
    return;
  }
  write_text(cfg.out, text);
  write_config(cfg, sidecar(cfg.out, ".config.json"));
}

void run_plot(const RunConfig& cfg) {
  require_out(cfg.out);
  if (cfg.roc.empty() == cfg.trace.empty()) throw Error("give either --roc files or one --trace");
  std::string svg;
  if (!cfg.roc.empty()) {
    std::vector<RocSeries> series;
    for (const auto& p : cfg.roc) {
      require_path(p, "ROC CSV");
      auto points = read_roc_csv(p);
      if (points.empty()) throw FormatError(p + ": no ROC points");
      series.push_back({fs::path(p).stem().string(), std::move(points)});
    }
    svg = roc_svg(series);
  } else {
    require_path(cfg.trace, "trace CSV");
    const auto rows = read_trace_csv(cfg.trace);
    const Measure m = parse_measure(cfg.measure);
    std::optional<double> thr;
    if (auto it = cfg.thresholds.find(cfg.measure); it != cfg.thresholds.end()) thr = it->second;
    svg = trace_svg(rows, m, thr, fs::path(cfg.trace).stem().string());
  }
  write_text(cfg.out, svg);
}

// --- option wiring ----------------------------------------------------------

// The config file is read before the flags are bound so that every flag
// starts from the config value.
std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

void add_common(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--config", "JSON run config; flags override it");
  sub->add_option("--seed", cfg.seed, "seed for all randomness");
}

void add_sim(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--track", cfg.track, "preset name or track JSON file");
  sub->add_option("--dt", cfg.dt, "simulation step (s)");
  sub->add_option("--speed", cfg.speed, "speed (m/s)");
  sub->add_option("--wheelbase", cfg.wheelbase, "wheelbase (m)");
}

void add_net(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--preset", cfg.preset, "fast or full");
  sub->add_option("--p-drop", cfg.p_drop, "dropout probability");
  sub->add_option("--l2", cfg.l2_lambda, "weight decay");
}

void add_training(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--epochs", cfg.epochs);
  sub->add_option("--batch-size", cfg.batch_size);
  sub->add_option("--lr", cfg.learning_rate, "SGD learning rate");
}

void add_tau(CLI::App* sub, RunConfig& cfg) {
  sub->add_option_function<double>("--tau", [&cfg](double v) { cfg.tau = v; },
                                   "precision for regression variance");
  sub->add_option("--tau-file", cfg.tau_file, "calibrate-tau output to take tau from");
}

void add_thresholds(CLI::App* sub, RunConfig& cfg) {
  sub->add_option_function<std::vector<std::string>>(
      "--threshold",
      [&cfg](const std::vector<std::string>& items) {
        for (const auto& item : items) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--threshold", "expected MEASURE=VALUE");
          const std::string name = item.substr(0, eq);
          parse_measure(name);
          cfg.thresholds[name] = parse_double(item.substr(eq + 1), "--threshold " + name);
        }
      },
      "MEASURE=VALUE, repeatable");
}

}  // namespace

int dispatch(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"Steering networks with dropout-based uncertainty on a desk-scale driving simulator",
               "mcdrive"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "expand help for every subcommand");

  auto* collect = app.add_subcommand("collect", "record expert driving into a train/test dataset");
  add_common(collect, cfg);
  add_sim(collect, cfg);
  collect->add_option("--preset", cfg.preset, "camera resolution of this preset");
  collect->add_option("--frames", cfg.frames, "frames to record before splitting");
  collect->add_option("--test-fraction", cfg.test_fraction);
  collect->add_option("--mirror", cfg.mirror, "mirror the training side (true/false)");
  collect->add_option("--perturb-interval", cfg.perturb_interval);
  collect->add_option("--perturb-offset", cfg.perturb_offset);
  collect->add_option("--perturb-heading", cfg.perturb_heading_deg);
  collect->add_option("--crash-budget", cfg.crash_budget);
  collect->add_option("--out", cfg.out, "output directory");

  auto* train_cmd = app.add_subcommand("train", "train a steering network");
  add_common(train_cmd, cfg);
  add_net(train_cmd, cfg);
  add_training(train_cmd, cfg);
  train_cmd->add_option("--data", cfg.data, "dataset directory");
  train_cmd->add_option("--arch", cfg.arch, "classification or regression");
  train_cmd->add_option("--out", cfg.out, "model file");

  auto* calibrate = app.add_subcommand("calibrate-tau", "grid-search the regression precision");
  add_common(calibrate, cfg);
  add_net(calibrate, cfg);
  add_training(calibrate, cfg);
  calibrate->add_option("--data", cfg.data, "dataset directory");
  calibrate->add_option("--length-scales", cfg.length_scales)->delimiter(',');
  calibrate->add_option("--lambdas", cfg.lambdas)->delimiter(',');
  calibrate->add_option("--validation-fraction", cfg.validation_fraction);
  calibrate->add_option("--passes", cfg.passes);
  calibrate->add_option("--out", cfg.out, "output JSON");

  auto* eval_static = app.add_subcommand("eval-static", "ROC of each measure against the safety oracle");
  add_common(eval_static, cfg);
  add_tau(eval_static, cfg);
  eval_static->add_option("--model", cfg.model);
  eval_static->add_option("--data", cfg.data, "dataset directory");
  eval_static->add_option("--track", cfg.track, "track the dataset was recorded on");
  eval_static->add_option("--sample", cfg.sample, "test frames to sample");
  eval_static->add_option("--oracle", cfg.oracle, "line or arc");
  eval_static->add_option("--passes", cfg.passes);
  eval_static->add_option("--max-fpr", cfg.max_fpr);
  eval_static->add_option("--out", cfg.out, "output directory");

  auto* drive = app.add_subcommand("drive", "monitored closed-loop drive");
  add_common(drive, cfg);
  add_sim(drive, cfg);
  add_tau(drive, cfg);
  add_thresholds(drive, cfg);
  drive->add_option("--model", cfg.model);
  drive->add_option("--duration", cfg.duration, "simulated seconds");
  drive->add_option("--passes", cfg.passes);
  drive->add_option("--rule", cfg.alert_rule, "any, all or single");
  drive->add_option("--alert-measure", cfg.alert_measure, "measure used by the single rule");
  drive->add_option("--start", cfg.start_s, "start position along the track (m)");
  drive->add_option("--out", cfg.out, "trace CSV (a JSON sidecar is written next to it)");

  auto* eval_crash = app.add_subcommand("eval-crash", "ROC of crash prediction n seconds ahead");
  add_common(eval_crash, cfg);
  eval_crash->add_option("--trace", cfg.traces, "trace CSV, repeatable")->take_all();
  eval_crash->add_option("--n", cfg.n_list, "lead times in seconds")->delimiter(',');
  eval_crash->add_option("--window", cfg.window, "half width of each window (s)");
  eval_crash->add_option("--measure", cfg.measure);
  eval_crash->add_option("--max-fpr", cfg.max_fpr);
  eval_crash->add_option_function<double>(
      "--peak-threshold", [&cfg](double v) { cfg.peak_threshold = v; },
      "threshold for the peak table (default: chosen at the best n)");
  eval_crash->add_option("--out", cfg.out, "output directory");

  auto* report = app.add_subcommand("report", "RMSE or accuracy on the test side");
  add_common(report, cfg);
  report->add_option("--model", cfg.model);
  report->add_option("--data", cfg.data, "dataset directory");
  report->add_option("--passes", cfg.passes);
  report->add_option("--out", cfg.out, "output JSON (stdout if omitted)");

  auto* plot = app.add_subcommand("plot", "render ROC or trace CSVs to SVG");
  plot->add_option("--config", "JSON run config; flags override it");
  plot->add_option("--roc", cfg.roc, "ROC CSV, repeatable")->take_all();
  plot->add_option("--trace", cfg.trace, "trace CSV");
  plot->add_option("--measure", cfg.measure, "measure to plot from a trace");
  add_thresholds(plot, cfg);
  plot->add_option("--out", cfg.out, "SVG file");

  try {
    const std::string config_path = find_config_path(argc, argv);
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) {
        std::cerr << "mcdrive: config not found: " << config_path << '\n';
        return kExitFailure;
      }
      cfg = load_config(config_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "mcdrive: " << e.what() << '\n';
    return kExitFailure;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "mcdrive: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*collect) run_collect(cfg);
    else if (*train_cmd) run_train(cfg);
    else if (*calibrate) run_calibrate(cfg);
    else if (*eval_static) run_eval_static(cfg);
    else if (*drive) run_drive(cfg);
    else if (*eval_crash) run_eval_crash(cfg);
    else if (*report) run_report(cfg);
    else if (*plot) run_plot(cfg);
  } catch (const std::exception& e) {
    std::cerr << "mcdrive: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace mcdrive::cli
