#include "lasead/sensors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lasead {

namespace {

constexpr double kEncoderAttackStart = 3.0;

double sample(Rng& rng, double variance) {
  if (variance <= 0.0) return 0.0;
  std::normal_distribution<double> dist(0.0, std::sqrt(variance));
  return dist(rng);
}

}  // namespace

const Vec2& SensorNoise::of(SensorId id) const {
  switch (id) {
    case SensorId::Encoder: return encoder;
    case SensorId::Camera: return camera;
    case SensorId::Imu: return imu;
  }
  throw std::out_of_range("sensor id");
}

Vec2& SensorNoise::of(SensorId id) {
  return const_cast<Vec2&>(static_cast<const SensorNoise&>(*this).of(id));
}

void SensorNoise::validate() const {
  for (SensorId id : kAllSensors) {
    const Vec2& v = of(id);
    if (!v.allFinite() || v.minCoeff() < 0.0) {
      throw std::invalid_argument("sensor noise for " + std::string(to_string(id)) +
                                  " must be finite and non-negative");
    }
  }
}

RawMeasurementSet measure_all(const CartPole& plant, const SensorNoise& noise, const Vec4& x,
                              double u_applied, std::int64_t k, Rng& rng) {
  const double accel = plant.derivative(x, u_applied)[kVelocity];
  RawMeasurementSet raw;
  raw.k = k;
  // Draw order is fixed (encoder, camera, imu; channel 0 then 1) so that a
  // seed pins the whole noise sequence.
  raw.of(SensorId::Encoder) = {x[kPosition] + sample(rng, noise.encoder[0]),
                               x[kVelocity] + sample(rng, noise.encoder[1])};
  raw.of(SensorId::Camera) = {x[kPosition] + sample(rng, noise.camera[0]),
                              x[kAngle] + sample(rng, noise.camera[1])};
  raw.of(SensorId::Imu) = {accel + sample(rng, noise.imu[0]),
                           x[kAngularVelocity] + sample(rng, noise.imu[1])};
  return raw;
}

AttackSchedule::AttackSchedule(std::vector<AttackWindow> windows) : windows_(std::move(windows)) {
  for (const auto& w : windows_) {
    if (!(w.start_s < w.end_s) || !std::isfinite(w.start_s) || !std::isfinite(w.end_s)) {
      throw std::invalid_argument("attack window needs finite start < end");
    }
    if (!w.bias.allFinite()) throw std::invalid_argument("attack bias must be finite");
  }
}

SensorSet AttackSchedule::active_at(double t) const {
  SensorSet active;
  for (const auto& w : windows_) {
    if (t >= w.start_s && t < w.end_s) active = active.with(w.sensor);
  }
  return active;
}

Vec2 AttackSchedule::bias_at(SensorId sensor, double t) const {
  Vec2 bias = Vec2::Zero();
  for (const auto& w : windows_) {
    if (w.sensor == sensor && t >= w.start_s && t < w.end_s) bias += w.bias;
  }
  return bias;
}

double AttackSchedule::last_end() const {
  double end = 0.0;
  for (const auto& w : windows_) end = std::max(end, w.end_s);
  return end;
}

AttackedMeasurement apply_attack(const RawMeasurementSet& raw, const AttackSchedule& schedule,
                                 double t) {
  AttackedMeasurement out{raw, schedule.active_at(t)};
  for (SensorId id : kAllSensors) {
    if (out.attacked.contains(id)) out.measurement.of(id) += schedule.bias_at(id, t);
  }
  return out;
}

const Vec2& AttackMagnitudes::of(SensorId id) const {
  switch (id) {
    case SensorId::Encoder: return encoder;
    case SensorId::Camera: return camera;
    case SensorId::Imu: return imu;
  }
  throw std::out_of_range("sensor id");
}

bool is_named_scenario(std::string_view name) {
  try {
    scenario_schedule(name);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

AttackSchedule scenario_schedule(std::string_view name) {
  const AttackMagnitudes mag;
  if (name == "NoAttack") return AttackSchedule{};
  if (name == "Encoder-IMUAttack") {
    return AttackSchedule({{SensorId::Encoder, 3.0, 6.0, mag.encoder},
                           {SensorId::Imu, 4.0, 7.0, mag.imu}});
  }
  if (name == "EICAttack") {
    return AttackSchedule({{SensorId::Encoder, 3.0, 4.0, mag.encoder},
                           {SensorId::Imu, 4.0, 6.0, mag.imu},
                           {SensorId::Camera, 6.0, 7.0, mag.camera}});
  }
  constexpr std::string_view prefix = "EncoderAttack";
  if (name.substr(0, prefix.size()) == prefix) {
    std::string_view rest = name.substr(prefix.size());
    double duration = 3.0;
    if (!rest.empty()) {
      if (rest.size() < 3 || rest.front() != '(' || rest.back() != ')') {
        throw std::invalid_argument("malformed scenario '" + std::string(name) + "'");
      }
      const std::string arg(rest.substr(1, rest.size() - 2));
      std::size_t used = 0;
      try {
        duration = std::stod(arg, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != arg.size() || !(duration > 0.0)) {
        throw std::invalid_argument("EncoderAttack duration must be a positive number");
      }
    }
    return AttackSchedule(
        {{SensorId::Encoder, kEncoderAttackStart, kEncoderAttackStart + duration, mag.encoder}});
  }
  throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
}

void StochasticAttacker::Params::validate() const {
  if (!(p_start >= 0.0 && p_start <= 1.0) || !(p_stay >= 0.0 && p_stay <= 1.0)) {
    throw std::invalid_argument("attacker transition probabilities must lie in [0, 1]");
  }
}

StochasticAttacker::StochasticAttacker(Params params, SensorSet initially_on)
    : params_(std::move(params)), active_(initially_on) {
  params_.validate();
}

SensorSet StochasticAttacker::step(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SensorSet next;
  for (SensorId id : kAllSensors) {
    const double p_on = active_.contains(id) ? params_.p_stay : params_.p_start;
    if (unit(rng) < p_on) next = next.with(id);
  }
  active_ = next;
  return active_;
}

Vec2 StochasticAttacker::bias(SensorId id) const {
  return active_.contains(id) ? params_.magnitudes.of(id) : Vec2::Zero();
}

double StochasticAttacker::stationary_on_probability() const {
  const double leave = 1.0 - params_.p_stay;
  const double denom = params_.p_start + leave;
  return denom > 0.0 ? params_.p_start / denom : 0.0;
}

}  // namespace lasead
