#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcdrive/evalkit.hpp"
#include "mcdrive/monitor.hpp"

namespace mcdrive::cli {

struct RocSeries {
  std::string label;
  std::vector<RocPoint> points;
};

// Area under the polyline through the points in file order.
double polyline_auc(const std::vector<RocPoint>& points);

// Unit square with the chance diagonal and one curve per series.
std::string roc_svg(const std::vector<RocSeries>& series);

// Measure against frame number, with a dashed red line at every crash and an
// optional horizontal threshold.
std::string trace_svg(const std::vector<TraceRow>& rows, Measure measure,
                      std::optional<double> threshold, const std::string& title);

}  // namespace mcdrive::cli
