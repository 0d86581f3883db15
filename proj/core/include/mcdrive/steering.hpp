#pragma once

namespace mcdrive {

// Steering command range accepted by the simulator, degrees.
inline constexpr double kMaxSteeringDeg = 25.0;
inline constexpr double kBucketWidthDeg = 0.25;
inline constexpr int kSteeringClasses = 200;

// Nearest grid point of -25 + 0.25 k, clamped to [0, 199]; +25 maps to 199.
// Throws std::out_of_range outside [-25, 25].
int bucket_angle(double degrees);
double unbucket(int cls);

// Regression networks predict degrees / 25.
inline double normalize_angle(double degrees) { return degrees / kMaxSteeringDeg; }
inline double denormalize_angle(double unit) { return unit * kMaxSteeringDeg; }

}  // namespace mcdrive
