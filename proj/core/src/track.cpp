#include "mcdrive/track.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "mcdrive/error.hpp"

namespace mcdrive {

double norm(Vec2 a) { return std::hypot(a.x, a.y); }

namespace {

constexpr double kPi = std::numbers::pi;

bool segments_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 &&
         d4 != 0;
}

}  // namespace

Track::Track(std::string name, double half_width, std::vector<Vec2> centerline)
    : name_(std::move(name)), half_width_(half_width), points_(std::move(centerline)) {
  if (points_.size() > 1 && points_.front() == points_.back()) points_.pop_back();
  validate();
  cumulative_.assign(points_.size() + 1, 0.0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cumulative_[i + 1] = cumulative_[i] + norm(points_[(i + 1) % points_.size()] - points_[i]);
  }
  build_grid();
}

void Track::validate() const {
  if (!(half_width_ > 0.0) || !std::isfinite(half_width_)) {
    throw ShapeError("track '" + name_ + "': half_width must be positive");
  }
  const std::size_t n = points_.size();
  if (n < 3) throw ShapeError("track '" + name_ + "': centerline needs at least 3 points");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(points_[i].x) || !std::isfinite(points_[i].y)) {
      throw NumericError("track '" + name_ + "': non-finite centerline point");
    }
    if (points_[i] == points_[(i + 1) % n]) {
      throw ShapeError("track '" + name_ + "': repeated consecutive point " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (segments_cross(points_[i], points_[(i + 1) % n], points_[j], points_[(j + 1) % n])) {
        throw ShapeError("track '" + name_ + "': centerline crosses itself at segments " +
                         std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }
  // Points far apart along the track must be at least a road width apart.
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) s[i] = s[i - 1] + norm(points_[i] - points_[i - 1]);
  const double total = s[n - 1] + norm(points_[0] - points_[n - 1]);
  const double min_sep = kPi * half_width_;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double along = std::min(s[j] - s[i], total - (s[j] - s[i]));
      if (along > min_sep && norm(points_[j] - points_[i]) <= 2.0 * half_width_) {
        throw ShapeError("track '" + name_ + "': road overlaps itself near points " +
                         std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }
}

void Track::build_grid() {
  near_limit_ = half_width_ + 2.0;
  cell_ = std::max(2.0, half_width_);
  double lo_x = points_[0].x, hi_x = lo_x, lo_y = points_[0].y, hi_y = lo_y;
  for (const Vec2& p : points_) {
    lo_x = std::min(lo_x, p.x);
    hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_y = std::max(hi_y, p.y);
  }
  grid_origin_ = {lo_x - near_limit_ - cell_, lo_y - near_limit_ - cell_};
  grid_cols_ = static_cast<int>(std::ceil((hi_x - lo_x + 2.0 * (near_limit_ + cell_)) / cell_)) + 1;
  grid_rows_ = static_cast<int>(std::ceil((hi_y - lo_y + 2.0 * (near_limit_ + cell_)) / cell_)) + 1;
  std::vector<std::vector<std::uint32_t>> cells(static_cast<std::size_t>(grid_cols_ * grid_rows_));
  const std::size_t n = points_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = points_[i];
    const Vec2 b = points_[(i + 1) % n];
    const int c0 = static_cast<int>(std::floor((std::min(a.x, b.x) - near_limit_ - grid_origin_.x) / cell_));
    const int c1 = static_cast<int>(std::floor((std::max(a.x, b.x) + near_limit_ - grid_origin_.x) / cell_));
    const int r0 = static_cast<int>(std::floor((std::min(a.y, b.y) - near_limit_ - grid_origin_.y) / cell_));
    const int r1 = static_cast<int>(std::floor((std::max(a.y, b.y) + near_limit_ - grid_origin_.y) / cell_));
    for (int r = std::max(r0, 0); r <= std::min(r1, grid_rows_ - 1); ++r) {
      for (int c = std::max(c0, 0); c <= std::min(c1, grid_cols_ - 1); ++c) {
        cells[static_cast<std::size_t>(r * grid_cols_ + c)].push_back(static_cast<std::uint32_t>(i));
      }
    }
  }
  cell_start_.assign(cells.size() + 1, 0);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    cell_start_[k + 1] = cell_start_[k] + static_cast<std::uint32_t>(cells[k].size());
    cell_segments_.insert(cell_segments_.end(), cells[k].begin(), cells[k].end());
  }
}

double Track::segment_distance(std::size_t i, Vec2 p) const {
  const Vec2 a = points_[i];
  const Vec2 d = points_[(i + 1) % points_.size()] - a;
  const Vec2 ap = p - a;
  const double t = std::clamp(dot(ap, d) / dot(d, d), 0.0, 1.0);
  const double dx = ap.x - t * d.x;
  const double dy = ap.y - t * d.y;
  return std::sqrt(dx * dx + dy * dy);
}

Projection Track::project(Vec2 p) const {
  const std::size_t n = points_.size();
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double dist = segment_distance(i, p);
    if (dist < best.distance) {
      best.distance = dist;
      best.segment = i;
    }
  }
  const Vec2 a = points_[best.segment];
  const Vec2 d = points_[(best.segment + 1) % n] - a;
  const double t = std::clamp(dot(p - a, d) / dot(d, d), 0.0, 1.0);
  best.point = a + t * d;
  best.s = cumulative_[best.segment] + t * norm(d);
  best.heading = std::atan2(d.y, d.x);
  best.offset = cross(d, p - a) >= 0.0 ? best.distance : -best.distance;
  return best;
}

Vec2 Track::point_at(double s) const {
  const double len = length();
  s = std::fmod(s, len);
  if (s < 0.0) s += len;
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()) - 1,
                                              points_.size() - 1);
  const Vec2 a = points_[i];
  const Vec2 b = points_[(i + 1) % points_.size()];
  const double seg = cumulative_[i + 1] - cumulative_[i];
  return a + ((s - cumulative_[i]) / seg) * (b - a);
}

double Track::heading_at(double s) const {
  const double len = length();
  s = std::fmod(s, len);
  if (s < 0.0) s += len;
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()) - 1,
                                              points_.size() - 1);
  const Vec2 d = points_[(i + 1) % points_.size()] - points_[i];
  return std::atan2(d.y, d.x);
}

double Track::near_distance(Vec2 p) const {
  const double fx = std::floor((p.x - grid_origin_.x) / cell_);
  const double fy = std::floor((p.y - grid_origin_.y) / cell_);
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (!(fx >= 0.0 && fy >= 0.0 && fx < grid_cols_ && fy < grid_rows_)) return inf;
  const auto k = static_cast<std::size_t>(static_cast<int>(fy) * grid_cols_ + static_cast<int>(fx));
  double best = inf;
  for (std::uint32_t j = cell_start_[k]; j < cell_start_[k + 1]; ++j) {
    best = std::min(best, segment_distance(cell_segments_[j], p));
  }
  return best < near_limit_ ? best : inf;
}

Track Track::mirrored() const {
  std::vector<Vec2> pts = points_;
  for (Vec2& p : pts) p.y = -p.y;
  return Track(name_, half_width_, std::move(pts));
}

std::vector<std::string> preset_track_names() { return {"oval", "figure8", "serpentine"}; }

namespace {

// Stadium: two 60 m straights joined by semicircles of radius 25 m, driven
// counter-clockwise from the start of the lower straight.
std::vector<Vec2> oval_points() {
  constexpr double straight = 60.0;
  constexpr double radius = 25.0;
  constexpr double spacing = 0.5;
  std::vector<Vec2> pts;
  const int n_straight = static_cast<int>(straight / spacing);
  const int n_arc = static_cast<int>(std::round(kPi * radius / spacing));
  for (int i = 0; i < n_straight; ++i) pts.push_back({-straight / 2 + i * spacing, -radius});
  for (int i = 0; i < n_arc; ++i) {
    const double a = -kPi / 2 + kPi * i / n_arc;
    pts.push_back({straight / 2 + radius * std::cos(a), radius * std::sin(a)});
  }
  for (int i = 0; i < n_straight; ++i) pts.push_back({straight / 2 - i * spacing, radius});
  for (int i = 0; i < n_arc; ++i) {
    const double a = kPi / 2 + kPi * i / n_arc;
    pts.push_back({-straight / 2 + radius * std::cos(a), radius * std::sin(a)});
  }
  return pts;
}

template <class Radius>
std::vector<Vec2> polar_points(Radius r, int n) {
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double th = 2.0 * kPi * i / n;
    const double rad = r(th);
    pts.push_back({rad * std::cos(th), rad * std::sin(th)});
  }
  return pts;
}

}  // namespace

Track preset_track(const std::string& name) {
  if (name == "oval") return Track("oval", kDefaultHalfWidth, oval_points());
  if (name == "serpentine") {
    return Track("serpentine", kDefaultHalfWidth,
                 polar_points([](double th) { return 50.0 + 6.0 * std::sin(6.0 * th); }, 900));
  }
  if (name == "figure8") {
    // A pinched loop; a crossing figure-eight would overlap itself.
    return Track("figure8", kDefaultHalfWidth,
                 polar_points([](double th) { return 40.0 * (1.0 + 0.35 * std::cos(2.0 * th)); }, 600));
  }
  throw Error("unknown track preset '" + name + "'");
}

std::string track_to_json(const Track& track) {
  nlohmann::json j;
  j["name"] = track.name();
  j["half_width"] = track.half_width();
  auto pts = nlohmann::json::array();
  for (const Vec2& p : track.points()) pts.push_back({p.x, p.y});
  j["centerline"] = std::move(pts);
  return j.dump();
}

Track track_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    std::vector<Vec2> pts;
    for (const auto& p : j.at("centerline")) {
      if (p.size() != 2) throw FormatError("track point must be [x, y]");
      pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    return Track(j.at("name").get<std::string>(), j.at("half_width").get<double>(), std::move(pts));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad track file: ") + e.what());
  }
}

void save_track(const Track& track, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << track_to_json(track) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

Track load_track(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open track file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return track_from_json(ss.str());
}

Track resolve_track(const std::string& name_or_path) {
  const auto names = preset_track_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    return preset_track(name_or_path);
  }
  return load_track(name_or_path);
}

}  // namespace mcdrive
