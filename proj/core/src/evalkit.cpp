#include "mcdrive/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "mcdrive/error.hpp"
#include "mcdrive/rng.hpp"
#include "mcdrive/steering.hpp"
#include "text_format.hpp"

namespace mcdrive {

namespace fs = std::filesystem;

RocCurve roc_curve(std::span<const ScoredSample> samples) {
  RocCurve curve;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw NumericError("ROC scores must be finite");
    (s.positive ? curve.positives : curve.negatives) += 1;
  }
  if (curve.positives == 0 || curve.negatives == 0) {
    throw Error("ROC needs both classes (positives " + std::to_string(curve.positives) +
                ", negatives " + std::to_string(curve.negatives) + ")");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return samples[a].score > samples[b].score; });
  const auto p = static_cast<double>(curve.positives);
  const auto n = static_cast<double>(curve.negatives);
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double score = samples[order[i]].score;
    while (i < order.size() && samples[order[i]].score == score) {
      (samples[order[i]].positive ? tp : fp) += 1;
      ++i;
    }
    curve.points.push_back({score, static_cast<double>(tp) / p, static_cast<double>(fp) / n});
  }
  curve.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});
  double auc = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = auc;
  return curve;
}

std::string ThresholdChoice::policy() const {
  std::string s = "max tpr with fpr <= " + detail::format_number(max_fpr);
  if (fallback) s += " (unmet: minimum-fpr point)";
  return s;
}

ThresholdChoice select_threshold(const RocCurve& curve, double max_fpr) {
  const RocPoint* best = nullptr;
  const RocPoint* lowest = nullptr;
  for (const auto& pt : curve.points) {
    if (!std::isfinite(pt.threshold)) continue;
    if (!lowest || pt.fpr < lowest->fpr || (pt.fpr == lowest->fpr && pt.tpr > lowest->tpr)) {
      lowest = &pt;
    }
    if (pt.fpr > max_fpr) continue;
    if (!best || pt.tpr > best->tpr || (pt.tpr == best->tpr && pt.fpr < best->fpr)) best = &pt;
  }
  if (!lowest) throw Error("ROC curve has no finite thresholds");
  ThresholdChoice c;
  c.max_fpr = max_fpr;
  const RocPoint* pick = best ? best : lowest;
  c.fallback = best == nullptr;
  c.threshold = pick->threshold;
  c.tpr = pick->tpr;
  c.fpr = pick->fpr;
  return c;
}

MetricOneResult metric_one(const Network& net, const Dataset& test, const Track& track,
                           const MetricOneConfig& cfg) {
  if (test.states.size() != test.size()) {
    throw Error("metric one needs simulator states for every test frame");
  }
  if (cfg.sample_n == 0 || cfg.sample_n > test.size()) {
    throw ShapeError("cannot draw " + std::to_string(cfg.sample_n) + " frames from " +
                     std::to_string(test.size()));
  }
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(cfg.seed);
  for (std::size_t i = 0; i < cfg.sample_n; ++i) {
    std::swap(order[i], order[i + rng.below(order.size() - i)]);
  }
  MetricOneResult out;
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.sample_n));
  const auto measures = measures_for(net.spec().head);
  for (std::size_t idx : out.indices) {
    const PassSamples s = mc_samples(net, test.image(idx), cfg.passes, derive_seed(cfg.seed, idx));
    const UncertaintyReport rep = summarize(s, cfg.tau);
    const bool unsafe = !safety_oracle(track, test.states[idx], rep.prediction_deg, cfg.oracle);
    out.predicted_deg.push_back(rep.prediction_deg);
    out.unsafe.push_back(unsafe);
    for (Measure m : measures) {
      double v = 0.0;
      switch (m) {
        case Measure::Variance: v = rep.variance; break;
        case Measure::VariationRatio: v = rep.variation_ratio; break;
        case Measure::Entropy: v = rep.entropy; break;
        case Measure::MutualInformation: v = rep.mutual_information; break;
      }
      out.samples[m].push_back({v, unsafe});
    }
  }
  const auto n_unsafe = static_cast<std::size_t>(std::count(out.unsafe.begin(), out.unsafe.end(), true));
  if (n_unsafe == 0 || n_unsafe == out.unsafe.size()) {
    throw Error("safety oracle labeled all " + std::to_string(out.unsafe.size()) + " frames " +
                (n_unsafe == 0 ? "safe" : "unsafe") + "; ROC undefined");
  }
  for (Measure m : measures) out.curves[m] = roc_curve(out.samples[m]);
  return out;
}

namespace {

constexpr double kTimeEps = 1e-9;

// Rows with t in [lo, hi].
std::pair<std::size_t, std::size_t> rows_between(const std::vector<TraceRow>& rows, double lo,
                                                 double hi) {
  const auto first = std::lower_bound(rows.begin(), rows.end(), lo - kTimeEps,
                                      [](const TraceRow& r, double t) { return r.t < t; });
  const auto last = std::upper_bound(rows.begin(), rows.end(), hi + kTimeEps,
                                     [](double t, const TraceRow& r) { return t < r.t; });
  return {static_cast<std::size_t>(first - rows.begin()), static_cast<std::size_t>(last - rows.begin())};
}

}  // namespace

CrashWindowSet extract_crash_windows(const DriveTrace& trace, int n_seconds, double window,
                                     std::uint64_t seed) {
  if (n_seconds < 1 || n_seconds > 6) throw Error("n must lie in [1, 6] seconds");
  if (!(window >= 0.0)) throw Error("window must be nonnegative");
  const auto& rows = trace.rows;
  CrashWindowSet set;
  set.n_seconds = n_seconds;
  set.window = window;
  if (rows.empty()) throw Error("empty trace");
  const double n = n_seconds;
  const double t0 = rows.front().t;
  const double t_end = rows.back().t;
  std::vector<double> crash_times;
  for (std::size_t i : trace.crash_rows()) crash_times.push_back(rows[i].t);
  for (double c : crash_times) {
    if (c - n - window < t0 - kTimeEps) {
      ++set.crashes_skipped;
      continue;
    }
    ++set.crashes_used;
    const auto [a, b] = rows_between(rows, c - n - window, c - n + window);
    for (std::size_t k = a; k < b; ++k) set.positive_rows.push_back(k);
  }
  if (set.crashes_used == 0) throw Error("trace has no crash with enough history for n = " + std::to_string(n_seconds));

  auto crash_free = [&](double lo, double hi) {
    const auto it = std::lower_bound(crash_times.begin(), crash_times.end(), lo - kTimeEps);
    return it == crash_times.end() || *it > hi + kTimeEps;
  };
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double ta = rows[i].t;
    if (ta - n - window < t0 - kTimeEps || ta + kAnchorMargin > t_end + kTimeEps) continue;
    if (crash_free(ta - n - window - kAnchorMargin, ta + kAnchorMargin)) eligible.push_back(i);
  }
  SplitMix64 rng(seed);
  for (std::size_t i = eligible.size(); i > 1; --i) std::swap(eligible[i - 1], eligible[rng.below(i)]);
  std::vector<double> chosen;
  for (std::size_t i : eligible) {
    if (chosen.size() == set.crashes_used) break;
    const double ta = rows[i].t;
    const bool overlaps = std::any_of(chosen.begin(), chosen.end(), [&](double tb) {
      return std::abs(ta - tb) <= 2.0 * window + kTimeEps;
    });
    if (overlaps) continue;
    chosen.push_back(ta);
    const auto [a, b] = rows_between(rows, ta - n - window, ta - n + window);
    for (std::size_t k = a; k < b; ++k) set.negative_rows.push_back(k);
  }
  set.anchors = chosen.size();
  if (chosen.empty()) throw Error("no crash-free anchor frames for n = " + std::to_string(n_seconds));
  std::sort(set.negative_rows.begin(), set.negative_rows.end());
  return set;
}

std::vector<ScoredSample> window_samples(const DriveTrace& trace, const CrashWindowSet& set,
                                         Measure measure) {
  std::vector<ScoredSample> out;
  auto add = [&](std::size_t row, bool positive) {
    const auto v = trace.rows.at(row).value(measure);
    if (!v) throw Error("trace has no " + to_string(measure) + " values");
    out.push_back({*v, positive});
  };
  for (std::size_t r : set.positive_rows) add(r, true);
  for (std::size_t r : set.negative_rows) add(r, false);
  return out;
}

CrashRocSuite crash_roc_suite(std::span<const DriveTrace> traces, std::span<const int> n_list,
                              Measure measure, double window, std::uint64_t seed, double max_fpr) {
  static constexpr int kDefaultN[] = {1, 2, 3, 4, 5, 6};
  if (n_list.empty()) n_list = kDefaultN;
  CrashRocSuite suite;
  suite.measure = measure;
  double best_auc = -1.0;
  for (int n : n_list) {
    std::vector<ScoredSample> samples;
    CrashRocEntry entry;
    entry.n_seconds = n;
    std::string last_error;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      try {
        const CrashWindowSet set = extract_crash_windows(
            traces[i], n, window, derive_seed(seed, i * 8 + static_cast<std::size_t>(n)));
        const auto s = window_samples(traces[i], set, measure);
        samples.insert(samples.end(), s.begin(), s.end());
        entry.crashes += set.crashes_used;
      } catch (const Error& e) {
        last_error = e.what();
      }
    }
    if (samples.empty()) throw Error("no crash windows for n = " + std::to_string(n) + ": " + last_error);
    entry.curve = roc_curve(samples);
    entry.choice = select_threshold(entry.curve, max_fpr);
    entry.positives = entry.curve.positives;
    entry.negatives = entry.curve.negatives;
    if (entry.curve.auc > best_auc) {
      best_auc = entry.curve.auc;
      suite.best_n = n;
    }
    suite.entries.push_back(std::move(entry));
  }
  return suite;
}

std::vector<PeakRow> peak_analysis(const DriveTrace& trace, double threshold, Measure measure) {
  if (!std::isfinite(threshold)) throw Error("peak analysis needs a finite threshold");
  const auto& rows = trace.rows;
  const double dt = trace.meta.dt > 0.0 ? trace.meta.dt : 1.0 / 6.0;
  std::vector<PeakRow> out;
  std::size_t id = 0;
  for (std::size_t ci : trace.crash_rows()) {
    const std::int64_t c = rows[ci].frame;
    std::size_t first = ci;
    while (first > 0 && rows[first - 1].frame >= c - kPeakWindowFrames) --first;
    PeakRow pr;
    pr.crash_id = id++;
    pr.crash_frame = c;
    std::optional<double> best;
    for (std::size_t k = first; k < ci; ++k) {
      const auto v = rows[k].value(measure);
      if (!v) continue;
      const std::int64_t dist = c - rows[k].frame;
      if (!pr.first_breach_frames && *v >= threshold) {
        pr.first_breach_frames = dist;
        pr.first_breach_seconds = static_cast<double>(dist) * dt;
      }
      if (!best || *v > *best) {
        best = v;
        pr.peak_frames = dist;
        pr.peak_seconds = static_cast<double>(dist) * dt;
      }
    }
    if (!best) continue;
    out.push_back(pr);
  }
  return out;
}

double rmse(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size()) throw ShapeError("rmse: size mismatch");
  if (predicted.empty()) throw ShapeError("rmse of an empty set");
  double sq = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - target[i];
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(predicted.size()));
}

double accuracy(std::span<const int> predicted, std::span<const int> target) {
  if (predicted.size() != target.size()) throw ShapeError("accuracy: size mismatch");
  if (predicted.empty()) throw ShapeError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == target[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

ModelMetrics report_metrics(const Network& net, const Dataset& test, std::size_t passes,
                            std::uint64_t seed) {
  if (test.size() == 0) throw ShapeError("report needs a non-empty test set");
  ModelMetrics m;
  m.head = net.spec().head;
  m.count = test.size();
  if (m.head == HeadKind::Regression) {
    std::vector<double> mc, det, target;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const Tensor img = test.image(i);
      mc.push_back(predictive_mean(mc_samples(net, img, passes, derive_seed(seed, i))));
      det.push_back(forward(net, img, ForwardMode::Deterministic)[0]);
      target.push_back(normalize_angle(test.angles[i]));
    }
    m.rmse_mc = rmse(mc, target);
    m.rmse_deterministic = rmse(det, target);
    m.rmse_mc_deg = denormalize_angle(m.rmse_mc);
    m.rmse_deterministic_deg = denormalize_angle(m.rmse_deterministic);
  } else {
    std::vector<int> mc, det, target;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const Tensor img = test.image(i);
      mc.push_back(mode_and_freq(mc_samples(net, img, passes, derive_seed(seed, i))).mode_class);
      const Tensor out = forward(net, img, ForwardMode::Deterministic);
      const auto v = out.values();
      det.push_back(static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()));
      target.push_back(bucket_angle(test.angles[i]));
    }
    m.accuracy_mc = accuracy(mc, target);
    m.accuracy_deterministic = accuracy(det, target);
  }
  return m;
}

void write_roc_csv(const RocCurve& curve, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "threshold,tpr,fpr\n";
  for (const auto& p : curve.points) {
    out << detail::format_number(p.threshold) << ',' << detail::format_number(p.tpr) << ','
        << detail::format_number(p.fpr) << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<RocPoint> read_roc_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty ROC file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "threshold,tpr,fpr") throw FormatError(path.string() + ": not a ROC CSV");
  std::vector<RocPoint> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = detail::split_csv_line(line);
    if (cols.size() != 3) throw FormatError(path.string() + ": expected 3 columns");
    pts.push_back({detail::parse_number(cols[0], path.string()), detail::parse_number(cols[1], path.string()),
                   detail::parse_number(cols[2], path.string())});
  }
  if (pts.empty()) throw FormatError(path.string() + ": ROC file has no points");
  return pts;
}

std::string roc_summary_json(const RocCurve& curve, const ThresholdChoice& choice) {
  nlohmann::json j = {{"auc", curve.auc},
                      {"chosen_threshold", choice.threshold},
                      {"tpr", choice.tpr},
                      {"fpr", choice.fpr},
                      {"policy", choice.policy()},
                      {"fallback", choice.fallback},
                      {"positives", curve.positives},
                      {"negatives", curve.negatives}};
  return j.dump(2);
}

void write_peak_csv(const std::vector<PeakRow>& rows, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "crash_id,first_breach_frames,first_breach_seconds,peak_frames,peak_seconds\n";
  for (const auto& r : rows) {
    out << r.crash_id << ',';
    if (r.first_breach_frames) {
      out << *r.first_breach_frames << ',' << detail::format_number(*r.first_breach_seconds);
    } else {
      out << "none,none";
    }
    out << ',' << r.peak_frames << ',' << detail::format_number(r.peak_seconds) << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace mcdrive
