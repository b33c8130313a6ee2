#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lasead/plant.hpp"
#include "lasead/types.hpp"

namespace lasead {

using Rng = std::mt19937_64;

/// Diagonal measurement-noise variances of each sensor's two channels.
/// encoder: (p, v), camera: (p, theta), imu: (v_dot, omega).
struct SensorNoise {
  Vec2 encoder{1e-4, 1e-4};
  Vec2 camera{4e-4, 1e-4};
  Vec2 imu{4e-4, 1e-4};

  const Vec2& of(SensorId id) const;
  Vec2& of(SensorId id);
  void validate() const;

  static SensorNoise zero() { return {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()}; }
};

/// Raw readings y^r of all sensors at step k.
struct RawMeasurementSet {
  std::int64_t k = 0;
  std::array<Vec2, kSensorCount> channels{Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};

  const Vec2& of(SensorId id) const { return channels[index_of(id)]; }
  Vec2& of(SensorId id) { return channels[index_of(id)]; }

  double encoder_position() const { return of(SensorId::Encoder)[0]; }
  double encoder_velocity() const { return of(SensorId::Encoder)[1]; }
  double camera_position() const { return of(SensorId::Camera)[0]; }
  double camera_angle() const { return of(SensorId::Camera)[1]; }
  double imu_acceleration() const { return of(SensorId::Imu)[0]; }
  double imu_angular_velocity() const { return of(SensorId::Imu)[1]; }
};

/// Samples every sensor. The IMU acceleration channel is the true cart
/// acceleration under the applied (never attacked) input.
RawMeasurementSet measure_all(const CartPole& plant, const SensorNoise& noise, const Vec4& x,
                              double u_applied, std::int64_t k, Rng& rng);

/// Additive bias applied to one sensor over [start_s, end_s).
struct AttackWindow {
  SensorId sensor = SensorId::Encoder;
  double start_s = 0.0;
  double end_s = 0.0;
  Vec2 bias = Vec2::Zero();
};

class AttackSchedule {
 public:
  AttackSchedule() = default;
  explicit AttackSchedule(std::vector<AttackWindow> windows);

  const std::vector<AttackWindow>& windows() const { return windows_; }
  bool empty() const { return windows_.empty(); }

  SensorSet active_at(double t) const;
  Vec2 bias_at(SensorId sensor, double t) const;
  /// Last end time over all windows; 0 for an empty schedule.
  double last_end() const;

 private:
  std::vector<AttackWindow> windows_;
};

struct AttackedMeasurement {
  RawMeasurementSet measurement;
  SensorSet attacked;  // ground-truth z_k
};

AttackedMeasurement apply_attack(const RawMeasurementSet& raw, const AttackSchedule& schedule,
                                 double t);

/// Bias magnitudes used by the named scenarios and the stochastic attacker.
struct AttackMagnitudes {
  Vec2 encoder{0.5, 0.5};
  Vec2 camera{0.3, 0.15};
  Vec2 imu{0.2, 0.9};

  const Vec2& of(SensorId id) const;
};

/// Named scenarios: NoAttack, EncoderAttack(<duration>) starting at 3 s,
/// Encoder-IMUAttack and EICAttack. Throws std::invalid_argument otherwise.
AttackSchedule scenario_schedule(std::string_view name);
bool is_named_scenario(std::string_view name);

/// Independent two-state Markov attacker per sensor.
class StochasticAttacker {
 public:
  struct Params {
    double p_start = 0.01;  // P(off -> on)
    double p_stay = 0.99;   // P(on -> on)
    AttackMagnitudes magnitudes{};
    void validate() const;
  };

  StochasticAttacker() = default;
  explicit StochasticAttacker(Params params, SensorSet initially_on = SensorSet::none());

  /// Advances every sensor's chain one step and returns the active set.
  SensorSet step(Rng& rng);
  SensorSet active() const { return active_; }
  Vec2 bias(SensorId id) const;
  const Params& params() const { return params_; }

  /// Stationary on-probability of each chain.
  double stationary_on_probability() const;

 private:
  Params params_;
  SensorSet active_;
};

}  // namespace lasead
