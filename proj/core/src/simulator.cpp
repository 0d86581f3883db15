#include "mcdrive/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mcdrive/error.hpp"
#include "mcdrive/steering.hpp"

namespace mcdrive {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Color {
  double r, g, b;
};

constexpr Color kSky{0.53, 0.71, 0.89};
constexpr Color kGrass{0.22, 0.45, 0.18};
constexpr Color kRoad{0.42, 0.42, 0.44};
constexpr Color kEdge{0.92, 0.92, 0.92};
constexpr Color kCenter{0.90, 0.78, 0.20};
constexpr double kEdgeWidth = 0.3;
constexpr double kCenterHalfWidth = 0.1;

void check_finite(const SimState& s) {
  if (!std::isfinite(s.position.x) || !std::isfinite(s.position.y) || !std::isfinite(s.heading) ||
      !std::isfinite(s.speed) || !std::isfinite(s.steering) || !std::isfinite(s.t)) {
    throw NumericError("simulator state is not finite");
  }
}

}  // namespace

SimState start_state(const Track& track, const SimConfig& cfg, double s) {
  SimState st;
  st.position = track.point_at(s);
  st.heading = track.heading_at(s);
  st.speed = cfg.speed;
  return st;
}

SimState step(const SimState& state, double steering_deg, double dt, double wheelbase) {
  if (!(dt > 0.0)) throw NumericError("dt must be positive");
  check_finite(state);
  if (!std::isfinite(steering_deg)) throw NumericError("steering command is not finite");
  SimState next = state;
  next.steering = std::clamp(steering_deg, -kMaxSteeringDeg, kMaxSteeringDeg);
  next.heading = state.heading - state.speed / wheelbase * std::tan(next.steering * kDegToRad) * dt;
  next.position.x = state.position.x + state.speed * dt * std::cos(next.heading);
  next.position.y = state.position.y + state.speed * dt * std::sin(next.heading);
  next.frame = state.frame + 1;
  next.t = static_cast<double>(next.frame) * dt;
  check_finite(next);
  return next;
}

SimState mirror(const SimState& state) {
  SimState m = state;
  m.position.y = -state.position.y;
  m.heading = -state.heading;
  m.steering = -state.steering;
  return m;
}

Tensor render_camera(const Track& track, const SimState& state, const CameraConfig& camera) {
  if (camera.height < 2 || camera.width < 2) throw ShapeError("camera resolution too small");
  if (!(camera.mount_height > 0.0) || !(camera.hfov_deg > 0.0 && camera.hfov_deg < 180.0) ||
      !(camera.horizon >= 0.0 && camera.horizon < 1.0) || !(camera.max_view > 0.0)) {
    throw ShapeError("invalid camera configuration");
  }
  check_finite(state);
  const int h = camera.height;
  const int w = camera.width;
  const double focal = 0.5 * w / std::tan(0.5 * camera.hfov_deg * kDegToRad);
  const double horizon_y = camera.horizon * h;
  const double half_w = 0.5 * w;
  const double c = std::cos(state.heading);
  const double s = std::sin(state.heading);
  const double hw = track.half_width();

  auto shade = [&](double x, double y) -> Color {
    if (y <= horizon_y) return kSky;
    const double d = camera.mount_height * focal / (y - horizon_y);
    if (d > camera.max_view) return kGrass;
    const double lateral = (half_w - x) * d / focal;
    const Vec2 p{state.position.x + d * c + lateral * (-s), state.position.y + d * s + lateral * c};
    const double dist = track.near_distance(p);
    if (dist > hw) return kGrass;
    if (dist > hw - kEdgeWidth) return kEdge;
    if (dist < kCenterHalfWidth) return kCenter;
    return kRoad;
  };

  Tensor img({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3});
  auto& px = img.values();
  for (int i = 0; i < h; ++i) {
    const double y0 = i + 0.25;
    const double y1 = i + 0.75;
    for (int j = 0; j < w; ++j) {
      const double xl = j + 0.25;
      const double xr = j + 0.75;
      const Color a = shade(xl, y0), b = shade(xr, y0), e = shade(xl, y1), f = shade(xr, y1);
      const std::size_t k = (static_cast<std::size_t>(i) * w + j) * 3;
      // Left/right pairs are summed first so a mirrored scene gives the same bits.
      px[k] = 0.25 * ((a.r + b.r) + (e.r + f.r));
      px[k + 1] = 0.25 * ((a.g + b.g) + (e.g + f.g));
      px[k + 2] = 0.25 * ((a.b + b.b) + (e.b + f.b));
    }
  }
  return img;
}

bool detect_crash(const Track& track, const SimState& state) {
  return track.project(state.position).distance > track.half_width();
}

double expert_steering(const Track& track, const SimState& state, double wheelbase,
                       double lookahead) {
  const Projection here = track.project(state.position);
  if (here.distance > 2.0 * track.half_width()) {
    throw Error("expert driver: car is " + std::to_string(here.distance) +
                " m from the centerline");
  }
  const Vec2 target = track.point_at(here.s + lookahead);
  const Vec2 rel = target - state.position;
  const double c = std::cos(state.heading);
  const double s = std::sin(state.heading);
  const double forward = rel.x * c + rel.y * s;
  const double left = -rel.x * s + rel.y * c;
  const double dist = std::hypot(forward, left);
  if (dist == 0.0) return 0.0;
  const double curvature = 2.0 * left / (dist * dist);
  const double deg = -std::atan(curvature * wheelbase) / kDegToRad;
  return std::clamp(deg, -kMaxSteeringDeg, kMaxSteeringDeg);
}

std::string to_string(OracleMode mode) { return mode == OracleMode::Line ? "line" : "arc"; }

OracleMode parse_oracle_mode(const std::string& text) {
  if (text == "line") return OracleMode::Line;
  if (text == "arc") return OracleMode::Arc;
  throw Error("unknown oracle mode '" + text + "' (expected line or arc)");
}

bool safety_oracle(const Track& track, const SimState& state, double angle_deg, OracleMode mode,
                   double wheelbase) {
  const double delta = std::clamp(angle_deg, -kMaxSteeringDeg, kMaxSteeringDeg) * kDegToRad;
  const double length = state.speed * kOracleHorizon;
  const double hw = track.half_width();
  // Signed curvature, positive turning left.
  const double kappa = -std::tan(delta) / wheelbase;
  for (int k = 0; k < kOracleSamples; ++k) {
    const double along = length * k / (kOracleSamples - 1);
    Vec2 p;
    if (mode == OracleMode::Line) {
      const double dir = state.heading - delta;
      p = {state.position.x + along * std::cos(dir), state.position.y + along * std::sin(dir)};
    } else if (kappa == 0.0) {
      p = {state.position.x + along * std::cos(state.heading),
           state.position.y + along * std::sin(state.heading)};
    } else {
      const double h = state.heading + kappa * along;
      p = {state.position.x + (std::sin(h) - std::sin(state.heading)) / kappa,
           state.position.y + (std::cos(state.heading) - std::cos(h)) / kappa};
    }
    if (track.project(p).distance > hw) return false;
  }
  return true;
}

Simulator::Simulator(Track track, SimConfig cfg)
    : Simulator(track, cfg, start_state(track, cfg)) {}

Simulator::Simulator(Track track, SimConfig cfg, SimState initial)
    : track_(std::move(track)),
      cfg_(cfg),
      state_(initial),
      last_crash_t_(-std::numeric_limits<double>::infinity()) {}

bool Simulator::resolve_crash() {
  if (!detect_crash(track_, state_)) return false;
  const Projection p = track_.project(state_.position);
  const double s = p.s + cfg_.respawn_ahead;
  state_.position = track_.point_at(s);
  state_.heading = track_.heading_at(s);
  state_.steering = 0.0;
  const bool counted = state_.t - last_crash_t_ >= cfg_.refractory;
  if (counted) last_crash_t_ = state_.t;
  return counted;
}

void Simulator::advance(double steering_deg) {
  state_ = step(state_, steering_deg, cfg_.dt, cfg_.wheelbase);
}

Frame Simulator::frame() const {
  const Projection p = track_.project(state_.position);
  return {render(), state_, p.offset, p.heading};
}

}  // namespace mcdrive
