#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace lasead {

inline constexpr int kStateDim = 4;
inline constexpr int kSensorCount = 3;

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

/// Component layout of the cart-pole state and of every state-shaped soft
/// measurement: cart position, cart velocity, pole angle, pole angular rate.
enum StateIndex : int {
  kPosition = 0,
  kVelocity = 1,
  kAngle = 2,
  kAngularVelocity = 3,
};

std::string_view component_name(int component);

enum class SensorId : std::uint8_t { Encoder = 0, Camera = 1, Imu = 2 };

inline constexpr std::array<SensorId, kSensorCount> kAllSensors{
    SensorId::Encoder, SensorId::Camera, SensorId::Imu};

constexpr int index_of(SensorId id) { return static_cast<int>(id); }

std::string_view to_string(SensorId id);
std::optional<SensorId> parse_sensor(std::string_view name);

/// Subset of the sensor suite. Iteration order follows SensorId order.
class SensorSet {
 public:
  constexpr SensorSet() = default;

  static constexpr SensorSet all() { return SensorSet{0b111}; }
  static constexpr SensorSet none() { return SensorSet{0}; }
  static constexpr SensorSet of(SensorId id) {
    return SensorSet{static_cast<std::uint8_t>(1u << index_of(id))};
  }
  static constexpr SensorSet from_bits(std::uint8_t bits) {
    return SensorSet{static_cast<std::uint8_t>(bits & 0b111)};
  }

  constexpr bool contains(SensorId id) const {
    return (bits_ >> index_of(id)) & 1u;
  }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr int size() const {
    return ((bits_ >> 0) & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1);
  }
  constexpr std::uint8_t bits() const { return bits_; }

  constexpr SensorSet with(SensorId id) const {
    return SensorSet{static_cast<std::uint8_t>(bits_ | (1u << index_of(id)))};
  }
  constexpr SensorSet without(SensorId id) const {
    return SensorSet{static_cast<std::uint8_t>(bits_ & ~(1u << index_of(id)))};
  }
  constexpr SensorSet operator-(SensorSet other) const {
    return SensorSet{static_cast<std::uint8_t>(bits_ & ~other.bits_)};
  }
  constexpr SensorSet operator|(SensorSet other) const {
    return SensorSet{static_cast<std::uint8_t>(bits_ | other.bits_)};
  }
  constexpr SensorSet operator&(SensorSet other) const {
    return SensorSet{static_cast<std::uint8_t>(bits_ & other.bits_)};
  }
  constexpr bool operator==(const SensorSet&) const = default;

  /// "{Encoder,Imu}" style rendering, used in logs and diagnostics.
  std::string to_string() const;

 private:
  constexpr explicit SensorSet(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

/// Per-component detector output a_k.
using AlertVector = std::bitset<kStateDim>;

/// Component availability of a soft measurement.
using ComponentMask = std::bitset<kStateDim>;

}  // namespace lasead
