#include "mcdrive/steering.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mcdrive {

int bucket_angle(double degrees) {
  if (!(degrees >= -kMaxSteeringDeg && degrees <= kMaxSteeringDeg)) {
    throw std::out_of_range("steering angle " + std::to_string(degrees) +
                            " outside [-25, 25] degrees");
  }
  const long cls = std::lround((degrees + kMaxSteeringDeg) / kBucketWidthDeg);
  return static_cast<int>(std::clamp(cls, 0L, static_cast<long>(kSteeringClasses - 1)));
}

double unbucket(int cls) {
  if (cls < 0 || cls >= kSteeringClasses) {
    throw std::out_of_range("steering class " + std::to_string(cls) + " outside [0, 199]");
  }
  return -kMaxSteeringDeg + kBucketWidthDeg * cls;
}

}  // namespace mcdrive
