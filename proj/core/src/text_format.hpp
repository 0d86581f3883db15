#pragma once

#include <charconv>
#include <limits>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mcdrive/error.hpp"

namespace mcdrive::detail {

// Shortest round-trip decimal form; infinities as inf / -inf.
inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::optional<double> try_parse_number(const std::string& s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline double parse_number(const std::string& s, const std::string& where) {
  const auto v = try_parse_number(s);
  if (!v) throw FormatError(where + ": bad number '" + s + "'");
  return *v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cols;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cols.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cols.push_back(cell);
  return cols;
}

}  // namespace mcdrive::detail
