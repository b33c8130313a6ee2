#include "lasead/types.hpp"

#include <stdexcept>

namespace lasead {

std::string_view component_name(int component) {
  switch (component) {
    case kPosition: return "position";
    case kVelocity: return "velocity";
    case kAngle: return "angle";
    case kAngularVelocity: return "angular_velocity";
    default: throw std::out_of_range("unknown state component");
  }
}

std::string_view to_string(SensorId id) {
  switch (id) {
    case SensorId::Encoder: return "Encoder";
    case SensorId::Camera: return "Camera";
    case SensorId::Imu: return "Imu";
  }
  return "?";
}

std::optional<SensorId> parse_sensor(std::string_view name) {
  if (name == "Encoder" || name == "encoder" || name == "E") return SensorId::Encoder;
  if (name == "Camera" || name == "camera" || name == "C") return SensorId::Camera;
  if (name == "Imu" || name == "imu" || name == "IMU" || name == "I") return SensorId::Imu;
  return std::nullopt;
}

std::string SensorSet::to_string() const {
  std::string out = "{";
  bool first = true;
  for (SensorId id : kAllSensors) {
    if (!contains(id)) continue;
    if (!first) out += ',';
    out += lasead::to_string(id);
    first = false;
  }
  out += '}';
  return out;
}

}  // namespace lasead
