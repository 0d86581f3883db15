#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <limits>
#include <sstream>

#include "mcdrive/error.hpp"

namespace mcdrive::cli {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 480;
constexpr double kLeft = 64;
constexpr double kRight = 24;
constexpr double kTop = 40;
constexpr double kBottom = 56;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd",
                                "#8c564b", "#e377c2", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

void header(std::ostringstream& o, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"16\">"
    << escape(title) << "</text>\n";
}

void axes(std::ostringstream& o, const Frame& f, const std::string& xlabel,
          const std::string& ylabel) {
  o << "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\""
    << num(kWidth - kLeft - kRight) << "\" height=\"" << num(kHeight - kTop - kBottom) << "\"/>\n";
  o << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 5.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 5.0;
    o << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(kHeight - kBottom + 16)
      << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(f.py(yv) + 4)
      << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
  }
  o << "<text x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\"" << num(kHeight - 16)
    << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(xlabel) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num((kTop + kHeight - kBottom) / 2)
    << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
    << num((kTop + kHeight - kBottom) / 2) << ")\">" << escape(ylabel) << "</text>\n";
  o << "</g>\n";
}

}  // namespace

double polyline_auc(const std::vector<RocPoint>& points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return std::abs(area);
}

std::string roc_svg(const std::vector<RocSeries>& series) {
  if (series.empty()) throw Error("nothing to plot");
  const Frame f{0, 1, 0, 1};
  std::ostringstream o;
  header(o, "ROC");
  axes(o, f, "false positive rate", "true positive rate");
  o << "<line x1=\"" << num(f.px(0)) << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << num(f.px(1))
    << "\" y2=\"" << num(f.py(1)) << "\" stroke=\"#999999\" stroke-dasharray=\"4 4\"/>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    if (s.points.empty()) throw FormatError(s.label + ": no ROC points");
    const char* colour = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      if (i) o << ' ';
      o << num(f.px(s.points[i].fpr)) << ',' << num(f.py(s.points[i].tpr));
    }
    o << "\"/>\n";
    const double ly = kHeight - kBottom - 12 - 16.0 * static_cast<double>(series.size() - 1 - k);
    o << "<text x=\"" << num(f.px(0.55)) << "\" y=\"" << num(ly)
      << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << colour << "\">"
      << escape(s.label) << " (AUC " << num(polyline_auc(s.points)) << ")</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string trace_svg(const std::vector<TraceRow>& rows, Measure measure,
                      std::optional<double> threshold, const std::string& title) {
  if (rows.empty()) throw FormatError("trace has no rows");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& r : rows) {
    if (auto v = r.value(measure)) {
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
    }
  }
  if (!(lo <= hi)) throw FormatError("trace has no " + to_string(measure) + " values");
  if (threshold && std::isfinite(*threshold)) {
    lo = std::min(lo, *threshold);
    hi = std::max(hi, *threshold);
  }
  lo = std::min(lo, 0.0);
  if (hi <= lo) hi = lo + 1.0;
  hi += (hi - lo) * 0.05;
  double x0 = static_cast<double>(rows.front().frame);
  double x1 = static_cast<double>(rows.back().frame);
  if (x1 <= x0) x1 = x0 + 1.0;
  const Frame f{x0, x1, lo, hi};

  std::ostringstream o;
  header(o, title);
  axes(o, f, "frame", to_string(measure));
  for (const auto& r : rows) {
    if (!r.crashed) continue;
    const double x = f.px(static_cast<double>(r.frame));
    o << "<line class=\"crash\" x1=\"" << num(x) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(x)
      << "\" y2=\"" << num(kHeight - kBottom)
      << "\" stroke=\"red\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
  }
  if (threshold && std::isfinite(*threshold)) {
    o << "<line class=\"threshold\" x1=\"" << num(kLeft) << "\" y1=\"" << num(f.py(*threshold))
      << "\" x2=\"" << num(kWidth - kRight) << "\" y2=\"" << num(f.py(*threshold))
      << "\" stroke=\"#555555\" stroke-dasharray=\"2 3\"/>\n";
  }
  o << "<polyline fill=\"none\" stroke=\"" << kPalette[0] << "\" stroke-width=\"1\" points=\"";
  bool first = true;
  for (const auto& r : rows) {
    auto v = r.value(measure);
    if (!v) continue;
    if (!first) o << ' ';
    first = false;
    o << num(f.px(static_cast<double>(r.frame))) << ',' << num(f.py(*v));
  }
  o << "\"/>\n</svg>\n";
  return o.str();
}

}  // namespace mcdrive::cli
