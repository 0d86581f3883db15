#include "run_config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mcdrive/error.hpp"

namespace mcdrive::cli {

using nlohmann::json;

namespace {

template <class Fn>
void for_each_field(Fn&& f, RunConfig& c) {
  f("seed", c.seed);
  f("track", c.track);
  f("preset", c.preset);
  f("arch", c.arch);
  f("p_drop", c.p_drop);
  f("l2_lambda", c.l2_lambda);
  f("passes", c.passes);
  f("dt", c.dt);
  f("speed", c.speed);
  f("wheelbase", c.wheelbase);
  f("frames", c.frames);
  f("test_fraction", c.test_fraction);
  f("mirror", c.mirror);
  f("perturb_interval", c.perturb_interval);
  f("perturb_offset", c.perturb_offset);
  f("perturb_heading_deg", c.perturb_heading_deg);
  f("crash_budget", c.crash_budget);
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("learning_rate", c.learning_rate);
  f("length_scales", c.length_scales);
  f("lambdas", c.lambdas);
  f("validation_fraction", c.validation_fraction);
  f("tau", c.tau);
  f("tau_file", c.tau_file);
  f("sample", c.sample);
  f("oracle", c.oracle);
  f("max_fpr", c.max_fpr);
  f("duration", c.duration);
  f("thresholds", c.thresholds);
  f("alert_rule", c.alert_rule);
  f("alert_measure", c.alert_measure);
  f("start_s", c.start_s);
  f("n_list", c.n_list);
  f("window", c.window);
  f("measure", c.measure);
  f("peak_threshold", c.peak_threshold);
  f("data", c.data);
  f("model", c.model);
  f("out", c.out);
  f("traces", c.traces);
  f("roc", c.roc);
  f("trace", c.trace);
}

// JSON has no infinities, so they are spelled "inf" and "-inf".
json number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

double to_number(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw FormatError("expected a number, got '" + s + "'");
  }
  if (!j.is_number()) throw FormatError("expected a number");
  return j.get<double>();
}

template <class T>
void put(json& j, const char* key, const T& v) {
  j[key] = v;
}

void put(json& j, const char* key, const double& v) { j[key] = number(v); }

void put(json& j, const char* key, const std::optional<double>& v) {
  j[key] = v ? number(*v) : json(nullptr);
}

void put(json& j, const char* key, const std::map<std::string, double>& v) {
  json o = json::object();
  for (const auto& [k, x] : v) o[k] = number(x);
  j[key] = o;
}

template <class T>
void take(const json& j, T& v) {
  v = j.get<T>();
}

void take(const json& j, double& v) { v = to_number(j); }

void take(const json& j, std::optional<double>& v) {
  if (j.is_null()) {
    v.reset();
  } else {
    v = to_number(j);
  }
}

void take(const json& j, std::map<std::string, double>& v) {
  if (!j.is_object()) throw FormatError("expected an object");
  v.clear();
  for (const auto& [k, x] : j.items()) v[k] = to_number(x);
}

}  // namespace

std::string to_json(const RunConfig& cfg) {
  json j = json::object();
  RunConfig copy = cfg;
  for_each_field([&](const char* key, auto& v) { put(j, key, v); }, copy);
  return j.dump(2);
}

RunConfig from_json(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  std::set<std::string> known;
  for_each_field([&](const char* key, auto&) { known.insert(key); }, cfg);
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw FormatError("unknown config key '" + key + "'");
  }
  for_each_field(
      [&](const char* key, auto& v) {
        if (!j.contains(key)) return;
        try {
          take(j.at(key), v);
        } catch (const json::exception& e) {
          throw FormatError(std::string("config key '") + key + "': " + e.what());
        } catch (const FormatError& e) {
          throw FormatError(std::string("config key '") + key + "': " + e.what());
        }
      },
      cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void write_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(cfg) << '\n';
}

}  // namespace mcdrive::cli
