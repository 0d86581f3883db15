#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mcdrive {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a);

// Closest point of the centerline to a query point.
struct Projection {
  double distance = 0.0;
  double offset = 0.0;  // signed, positive on the left of the driving direction
  double s = 0.0;       // arc length of the closest point
  double heading = 0.0; // direction of the closest segment, radians
  Vec2 point;
  std::size_t segment = 0;
};

// Closed centerline with constant half-width. The closing segment from the
// last point back to the first is implicit; a repeated first point at the end
// is dropped.
class Track {
 public:
  Track(std::string name, double half_width, std::vector<Vec2> centerline);

  const std::string& name() const noexcept { return name_; }
  double half_width() const noexcept { return half_width_; }
  const std::vector<Vec2>& points() const noexcept { return points_; }
  double length() const noexcept { return cumulative_.back(); }
  std::size_t segment_count() const noexcept { return points_.size(); }

  Projection project(Vec2 p) const;
  Vec2 point_at(double s) const;
  double heading_at(double s) const;

  // Exact distance to the centerline when it is below near_limit(), +inf
  // otherwise. Uses a spatial grid, so it is cheap enough for per-pixel use.
  double near_distance(Vec2 p) const;
  double near_limit() const noexcept { return near_limit_; }

  // Reflection across the x axis (y -> -y). Driving direction is preserved.
  Track mirrored() const;

 private:
  double segment_distance(std::size_t i, Vec2 p) const;
  void validate() const;
  void build_grid();

  std::string name_;
  double half_width_;
  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
  double near_limit_ = 0.0;
  Vec2 grid_origin_;
  double cell_ = 1.0;
  int grid_cols_ = 0;
  int grid_rows_ = 0;
  std::vector<std::uint32_t> cell_start_;
  std::vector<std::uint32_t> cell_segments_;
};

inline constexpr double kDefaultHalfWidth = 4.0;

std::vector<std::string> preset_track_names();
// "oval", "figure8" or "serpentine".
Track preset_track(const std::string& name);

std::string track_to_json(const Track& track);
Track track_from_json(const std::string& text);
void save_track(const Track& track, const std::filesystem::path& path);
Track load_track(const std::filesystem::path& path);
// Preset name or path to a track file.
Track resolve_track(const std::string& name_or_path);

}  // namespace mcdrive
