#pragma once

#include <cstdint>
#include <string>

namespace streid {

using Frame = std::int64_t;

/// One detection of a vehicle by a camera. Frame numbers are the time unit.
struct Observation {
  std::string image_id;
  std::string vehicle_id;
  int camera_id = 0;
  Frame frame = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

} // namespace streid
