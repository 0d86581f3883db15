#pragma once

#include <cstdint>

#include "mcdrive/tensor.hpp"
#include "mcdrive/track.hpp"

namespace mcdrive {

struct CameraConfig {
  int height = 66;
  int width = 200;
  double mount_height = 1.4;  // meters above the ground
  double hfov_deg = 100.0;
  double horizon = 0.25;      // fraction of the image height above the horizon line
  double max_view = 80.0;     // ground beyond this distance is drawn as background
};

struct SimConfig {
  double dt = 1.0 / 6.0;
  double speed = 6.7;
  double wheelbase = 2.5;
  double respawn_ahead = 5.0;
  double refractory = 2.0;
  CameraConfig camera;
};

struct SimState {
  Vec2 position;
  double heading = 0.0;  // radians, counter-clockwise from +x
  double speed = 0.0;
  double steering = 0.0; // degrees, positive turns right
  double t = 0.0;
  std::int64_t frame = 0;

  friend bool operator==(const SimState&, const SimState&) = default;
};

struct Frame {
  Tensor image;
  SimState state;
  double lateral_offset = 0.0;
  double road_heading = 0.0;
};

// Car on the centerline at arc length s, aligned with the road.
SimState start_state(const Track& track, const SimConfig& cfg, double s = 0.0);

// Kinematic bicycle update. The steering command is clamped to +-25 degrees;
// t is recomputed as frame * dt.
SimState step(const SimState& state, double steering_deg, double dt, double wheelbase = 2.5);

// Reflection across the x axis, matching Track::mirrored().
SimState mirror(const SimState& state);

Tensor render_camera(const Track& track, const SimState& state, const CameraConfig& camera);

bool detect_crash(const Track& track, const SimState& state);

// Pure pursuit toward the centerline point `lookahead` meters ahead.
double expert_steering(const Track& track, const SimState& state, double wheelbase = 2.5,
                       double lookahead = 8.0);

enum class OracleMode { Line, Arc };

std::string to_string(OracleMode mode);
OracleMode parse_oracle_mode(const std::string& text);

inline constexpr int kOracleSamples = 30;
inline constexpr double kOracleHorizon = 3.0;  // seconds of travel

// True when the path driven at the given angle for 3 s stays on the road.
bool safety_oracle(const Track& track, const SimState& state, double angle_deg, OracleMode mode,
                   double wheelbase = 2.5);

// Stepping world with crash detection, respawn and a refractory period for
// crash events.
class Simulator {
 public:
  Simulator(Track track, SimConfig cfg);
  Simulator(Track track, SimConfig cfg, SimState initial);

  const Track& track() const noexcept { return track_; }
  const SimConfig& config() const noexcept { return cfg_; }
  const SimState& state() const noexcept { return state_; }
  void set_state(const SimState& s) { state_ = s; }

  // Detects a crash at the current state. On detection the car is respawned
  // on the centerline ahead; returns true only for crash events outside the
  // refractory period.
  bool resolve_crash();
  void advance(double steering_deg);
  Tensor render() const { return render_camera(track_, state_, cfg_.camera); }
  Frame frame() const;

 private:
  Track track_;
  SimConfig cfg_;
  SimState state_;
  double last_crash_t_;
};

}  // namespace mcdrive
