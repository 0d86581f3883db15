#include "mcdrive/monitor.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "mcdrive/error.hpp"
#include "mcdrive/rng.hpp"
#include "text_format.hpp"

namespace mcdrive {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Measure m) {
  switch (m) {
    case Measure::VariationRatio: return "vr";
    case Measure::Entropy: return "entropy";
    case Measure::MutualInformation: return "mi";
    case Measure::Variance: return "variance";
  }
  return "?";
}

Measure parse_measure(const std::string& text) {
  for (Measure m : kAllMeasures) {
    if (to_string(m) == text) return m;
  }
  throw Error("unknown measure '" + text + "' (expected vr, entropy, mi or variance)");
}

std::vector<Measure> measures_for(HeadKind head) {
  if (head == HeadKind::Regression) return {Measure::Variance};
  return {Measure::VariationRatio, Measure::Entropy, Measure::MutualInformation};
}

std::string to_string(AlertRule r) {
  switch (r) {
    case AlertRule::Any: return "any";
    case AlertRule::All: return "all";
    case AlertRule::Single: return "single";
  }
  return "?";
}

AlertRule parse_alert_rule(const std::string& text) {
  if (text == "any") return AlertRule::Any;
  if (text == "all") return AlertRule::All;
  if (text == "single") return AlertRule::Single;
  throw Error("unknown alert rule '" + text + "' (expected any, all or single)");
}

ThresholdSet ThresholdSet::single(Measure m, double threshold) {
  ThresholdSet t;
  t.set(m, threshold);
  t.set_rule(AlertRule::Single, m);
  return t;
}

void ThresholdSet::set(Measure m, double threshold) {
  if (std::isnan(threshold)) throw NumericError("threshold for " + to_string(m) + " is NaN");
  values_[static_cast<std::size_t>(m)] = threshold;
}

void ThresholdSet::set_rule(AlertRule rule, Measure measure) {
  if (rule == AlertRule::Single && !get(measure)) {
    throw Error("single-measure rule needs a threshold for " + to_string(measure));
  }
  rule_ = rule;
  single_ = measure;
}

bool ThresholdSet::fires(const TraceRow& row) const {
  auto hit = [&](Measure m) {
    const auto thr = get(m);
    const auto v = row.value(m);
    return thr && v && *v >= *thr;
  };
  if (rule_ == AlertRule::Single) return hit(single_);
  bool any = false;
  bool all = true;
  bool configured = false;
  for (Measure m : kAllMeasures) {
    if (!get(m)) continue;
    configured = true;
    const bool h = hit(m);
    any = any || h;
    all = all && h;
  }
  return rule_ == AlertRule::Any ? any : configured && all;
}

std::vector<std::size_t> DriveTrace::crash_rows() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].crashed) out.push_back(i);
  }
  return out;
}

std::size_t DriveTrace::alert_count() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.alert ? 1 : 0;
  return n;
}

namespace {

json number_json(double v) {
  if (std::isfinite(v)) return v;
  return detail::format_number(v);
}

double number_from_json(const json& j) {
  if (j.is_string()) return detail::parse_number(j.get<std::string>(), "json");
  return j.get<double>();
}

json thresholds_to(const ThresholdSet& t) {
  json values = json::object();
  for (Measure m : kAllMeasures) {
    if (auto v = t.get(m)) values[to_string(m)] = number_json(*v);
  }
  return {{"rule", to_string(t.rule())}, {"measure", to_string(t.single_measure())},
          {"values", values}};
}

ThresholdSet thresholds_from(const json& j) {
  ThresholdSet t;
  for (const auto& [k, v] : j.at("values").items()) t.set(parse_measure(k), number_from_json(v));
  t.set_rule(parse_alert_rule(j.at("rule").get<std::string>()),
             parse_measure(j.value("measure", std::string("mi"))));
  return t;
}

void emit(std::ostream* out, const json& j) {
  if (!out) return;
  *out << j.dump() << '\n';
  out->flush();
}

}  // namespace

std::string thresholds_json(const ThresholdSet& t) { return thresholds_to(t).dump(); }

ThresholdSet thresholds_from_json(const std::string& text) {
  try {
    return thresholds_from(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad threshold JSON: ") + e.what());
  }
}

DriveTrace run_monitored_drive(const Network& net, const Track& track, const MonitorConfig& cfg,
                               std::ostream* events) {
  if (!(cfg.duration >= 1.0)) throw Error("monitored drive needs a duration of at least 1 s");
  if (cfg.passes == 0) throw Error("monitored drive needs at least one pass");
  if (!(cfg.tau > 0.0)) throw NumericError("tau must be positive");
  SimConfig sim_cfg = cfg.sim;
  sim_cfg.camera.height = net.spec().input.height;
  sim_cfg.camera.width = net.spec().input.width;
  if (net.spec().input.channels != 3) throw ShapeError("camera images have 3 channels");
  Simulator sim(track, sim_cfg, start_state(track, sim_cfg, cfg.start_s));

  DriveTrace trace;
  TraceMeta& meta = trace.meta;
  meta.model = cfg.model_id;
  meta.head = to_string(net.spec().head);
  meta.track = track.name();
  meta.passes = cfg.passes;
  meta.tau = cfg.tau;
  meta.thresholds = cfg.thresholds;
  meta.seed = cfg.seed;
  meta.dt = sim_cfg.dt;
  meta.speed = sim_cfg.speed;
  meta.duration = cfg.duration;

  const auto n_frames = static_cast<std::int64_t>(std::llround(cfg.duration / sim_cfg.dt));
  trace.rows.reserve(static_cast<std::size_t>(n_frames));
  const bool regression = net.spec().head == HeadKind::Regression;
  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t f = 0; f < n_frames; ++f) {
    TraceRow row;
    row.crashed = sim.resolve_crash();
    row.frame = sim.state().frame;
    row.t = sim.state().t;
    const Tensor img = sim.render();
    const PassSamples samples =
        mc_samples(net, img, cfg.passes, derive_seed(cfg.seed, static_cast<std::uint64_t>(f)));
    const UncertaintyReport rep = summarize(samples, cfg.tau);
    row.angle_deg = rep.prediction_deg;
    if (regression) {
      row.measures[static_cast<std::size_t>(Measure::Variance)] = rep.variance;
    } else {
      row.measures[static_cast<std::size_t>(Measure::VariationRatio)] = rep.variation_ratio;
      row.measures[static_cast<std::size_t>(Measure::Entropy)] = rep.entropy;
      row.measures[static_cast<std::size_t>(Measure::MutualInformation)] = rep.mutual_information;
    }
    row.alert = cfg.thresholds.fires(row);
    if (row.crashed) {
      ++meta.crashes;
      emit(events, {{"event", "crash"}, {"frame", row.frame}, {"t", row.t}});
    }
    if (row.alert) {
      ++meta.alerts;
      json ev = {{"event", "alert"}, {"frame", row.frame}, {"t", row.t}, {"angle_deg", row.angle_deg}};
      for (Measure m : kAllMeasures) {
        if (auto v = row.value(m)) ev[to_string(m)] = number_json(*v);
      }
      emit(events, ev);
    }
    trace.rows.push_back(row);
    sim.advance(rep.prediction_deg);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  meta.fps = wall > 0.0 ? static_cast<double>(n_frames) / wall : 0.0;
  return trace;
}

DriveTrace replay(const DriveTrace& trace, const ThresholdSet& thresholds) {
  DriveTrace out = trace;
  out.meta.thresholds = thresholds;
  out.meta.alerts = 0;
  for (auto& row : out.rows) {
    row.alert = thresholds.fires(row);
    out.meta.alerts += row.alert ? 1 : 0;
  }
  return out;
}

void write_trace_csv(const DriveTrace& trace, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "frame,t,angle_deg,vr,entropy,mi,variance,crashed,alert\n";
  for (const auto& r : trace.rows) {
    out << r.frame << ',' << detail::format_number(r.t) << ',' << detail::format_number(r.angle_deg);
    for (Measure m : kAllMeasures) {
      out << ',';
      if (auto v = r.value(m)) out << detail::format_number(*v);
    }
    out << ',' << (r.crashed ? 1 : 0) << ',' << (r.alert ? 1 : 0) << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<TraceRow> read_trace_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open trace " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty trace file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "frame,t,angle_deg,vr,entropy,mi,variance,crashed,alert") {
    throw FormatError(path.string() + ": unexpected trace header '" + line + "'");
  }
  std::vector<TraceRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = detail::split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cols.size() != 9) throw FormatError(where + ": expected 9 columns");
    TraceRow r;
    r.frame = static_cast<std::int64_t>(detail::parse_number(cols[0], where));
    r.t = detail::parse_number(cols[1], where);
    r.angle_deg = detail::parse_number(cols[2], where);
    for (std::size_t k = 0; k < 4; ++k) {
      if (!cols[3 + k].empty()) r.measures[k] = detail::parse_number(cols[3 + k], where);
    }
    r.crashed = cols[7] == "1";
    r.alert = cols[8] == "1";
    if (!rows.empty() && r.frame <= rows.back().frame) {
      throw FormatError(where + ": frames must be strictly increasing");
    }
    rows.push_back(r);
  }
  return rows;
}

std::string trace_meta_json(const TraceMeta& m) {
  json j = {{"model", m.model},       {"head", m.head},
            {"track", m.track},       {"passes", m.passes},
            {"tau", number_json(m.tau)}, {"thresholds", thresholds_to(m.thresholds)},
            {"seed", m.seed},         {"dt", m.dt},
            {"speed", m.speed},       {"duration", m.duration},
            {"crashes", m.crashes},   {"alerts", m.alerts},
            {"fps", m.fps}};
  return j.dump(2);
}

TraceMeta trace_meta_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    TraceMeta m;
    m.model = j.at("model").get<std::string>();
    m.head = j.at("head").get<std::string>();
    m.track = j.at("track").get<std::string>();
    m.passes = j.at("passes").get<std::size_t>();
    m.tau = number_from_json(j.at("tau"));
    m.thresholds = thresholds_from(j.at("thresholds"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.dt = j.at("dt").get<double>();
    m.speed = j.at("speed").get<double>();
    m.duration = j.at("duration").get<double>();
    m.crashes = j.at("crashes").get<std::size_t>();
    m.alerts = j.at("alerts").get<std::size_t>();
    m.fps = j.at("fps").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad trace metadata: ") + e.what());
  }
}

void save_trace(const DriveTrace& trace, const fs::path& csv_path) {
  write_trace_csv(trace, csv_path);
  fs::path meta = csv_path;
  meta.replace_extension(".json");
  std::ofstream out(meta, std::ios::binary);
  if (!out) throw Error("cannot write " + meta.string());
  out << trace_meta_json(trace.meta) << '\n';
}

DriveTrace load_trace(const fs::path& csv_path) {
  DriveTrace t;
  t.rows = read_trace_csv(csv_path);
  fs::path meta = csv_path;
  meta.replace_extension(".json");
  std::ifstream in(meta, std::ios::binary);
  if (in) {
    std::stringstream ss;
    ss << in.rdbuf();
    t.meta = trace_meta_from_json(ss.str());
  }
  return t;
}

}  // namespace mcdrive
