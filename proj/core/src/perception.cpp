#include "lasead/perception.hpp"

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace lasead {

namespace {

void check_component(int component) {
  if (component < 0 || component >= kStateDim) {
    throw std::out_of_range("component index " + std::to_string(component) + " outside 0..3");
  }
}

int parse_component(const nlohmann::json& j) {
  if (j.is_number_integer()) {
    const int c = j.get<int>();
    check_component(c);
    return c;
  }
  const std::string name = j.get<std::string>();
  for (int c = 0; c < kStateDim; ++c) {
    if (name == component_name(c)) return c;
  }
  throw std::invalid_argument("unknown component '" + name + "'");
}

struct Fused {
  double value;
  double variance;
};

Fused fuse(double a, double var_a, double b, double var_b) {
  const double w = fusion_weight(var_a, var_b);
  return {w * a + (1.0 - w) * b, w * w * var_a + (1.0 - w) * (1.0 - w) * var_b};
}

}  // namespace

PerceptionGraph::PerceptionGraph(const std::vector<Edge>& edges) {
  for (const auto& [sensor, component] : edges) {
    check_component(component);
    neighbors_[component] = neighbors_[component].with(sensor);
  }
}

PerceptionGraph PerceptionGraph::cart_pole() {
  return PerceptionGraph({{SensorId::Encoder, kPosition},
                          {SensorId::Encoder, kVelocity},
                          {SensorId::Camera, kPosition},
                          {SensorId::Camera, kAngle},
                          {SensorId::Imu, kVelocity},
                          {SensorId::Imu, kAngularVelocity}});
}

SensorSet PerceptionGraph::neighbors(int component) const {
  check_component(component);
  return neighbors_[component];
}

bool PerceptionGraph::has_edge(SensorId sensor, int component) const {
  return neighbors(component).contains(sensor);
}

std::vector<PerceptionGraph::Edge> PerceptionGraph::edges() const {
  std::vector<Edge> out;
  for (SensorId id : kAllSensors) {
    for (int j = 0; j < kStateDim; ++j) {
      if (neighbors_[j].contains(id)) out.emplace_back(id, j);
    }
  }
  return out;
}

ComponentMask PerceptionGraph::propagate(SensorSet attacked) const {
  ComponentMask s;
  for (int j = 0; j < kStateDim; ++j) s[j] = !(neighbors_[j] & attacked).empty();
  return s;
}

bool PerceptionGraph::covers_all_components() const {
  for (const auto& n : neighbors_) {
    if (n.empty()) return false;
  }
  return true;
}

std::string PerceptionGraph::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [sensor, component] : this->edges()) {
    edges.push_back({{"sensor", std::string(to_string(sensor))},
                     {"component", std::string(component_name(component))}});
  }
  return nlohmann::json{{"edges", edges}}.dump(2);
}

PerceptionGraph PerceptionGraph::from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    const auto& list = doc.is_array() ? doc : doc.at("edges");
    std::vector<Edge> edges;
    for (const auto& e : list) {
      const auto sensor = parse_sensor(e.at("sensor").get<std::string>());
      if (!sensor) throw std::invalid_argument("unknown sensor in graph edge");
      edges.emplace_back(*sensor, parse_component(e.at("component")));
    }
    return PerceptionGraph(edges);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("perception graph: ") + e.what());
  }
}

std::vector<int> SoftMeasurement::rows() const {
  std::vector<int> out;
  for (int j = 0; j < kStateDim; ++j) {
    if (available[j]) out.push_back(j);
  }
  return out;
}

MeasurementModel pipeline_model(const SoftMeasurement& soft) {
  MeasurementModel model;
  model.rows = soft.rows();
  const auto n = static_cast<Eigen::Index>(model.rows.size());
  model.selection = Eigen::MatrixXd::Zero(n, kStateDim);
  model.noise = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    model.selection(r, model.rows[r]) = 1.0;
    model.noise(r, r) = soft.variance[model.rows[r]];
  }
  return model;
}

double fusion_weight(double first_variance, double second_variance) {
  const double total = first_variance + second_variance;
  if (total <= 0.0) return 1.0;
  return second_variance / total;
}

PerceptionPipeline::PerceptionPipeline(SensorNoise noise, double dt, Vec4 integration_noise)
    : noise_(std::move(noise)), dt_(dt), integration_noise_(integration_noise) {
  noise_.validate();
  if (!(dt_ > 0.0)) throw std::invalid_argument("pipeline dt must be > 0");
  if (!integration_noise_.allFinite() || (integration_noise_.array() < 0.0).any()) {
    throw std::invalid_argument("integration noise must be finite and >= 0");
  }
}

ComponentMask PerceptionPipeline::reachable(SensorSet enabled, bool has_previous) {
  const bool e = enabled.contains(SensorId::Encoder);
  const bool c = enabled.contains(SensorId::Camera);
  const bool i = enabled.contains(SensorId::Imu);
  ComponentMask m;
  m[kPosition] = e || c;
  m[kVelocity] = e || (i && has_previous) || (m[kPosition] && has_previous);
  m[kAngle] = c || (i && has_previous);
  m[kAngularVelocity] = i || (c && has_previous);
  return m;
}

SoftMeasurement PerceptionPipeline::process(SensorSet enabled, const RawMeasurementSet& raw,
                                            const std::optional<SoftMeasurement>& previous) const {
  const bool use_encoder = enabled.contains(SensorId::Encoder);
  const bool use_camera = enabled.contains(SensorId::Camera);
  const bool use_imu = enabled.contains(SensorId::Imu);
  const auto prev_has = [&](int j) { return previous && previous->available[j]; };

  SoftMeasurement out;

  // Position: direct sources only.
  if (use_encoder && use_camera) {
    const Fused f = fuse(raw.encoder_position(), noise_.encoder[0], raw.camera_position(),
                         noise_.camera[0]);
    out.y[kPosition] = f.value;
    out.variance[kPosition] = f.variance;
    out.available[kPosition] = true;
  } else if (use_encoder) {
    out.y[kPosition] = raw.encoder_position();
    out.variance[kPosition] = noise_.encoder[0];
    out.available[kPosition] = true;
  } else if (use_camera) {
    out.y[kPosition] = raw.camera_position();
    out.variance[kPosition] = noise_.camera[0];
    out.available[kPosition] = true;
  }

  // Angle: camera, else integrate the IMU rate from the previous angle.
  if (use_camera) {
    out.y[kAngle] = raw.camera_angle();
    out.variance[kAngle] = noise_.camera[1];
    out.available[kAngle] = true;
  } else if (use_imu && prev_has(kAngle)) {
    out.y[kAngle] = previous->y[kAngle] + dt_ * raw.imu_angular_velocity();
    out.variance[kAngle] =
        previous->variance[kAngle] + dt_ * dt_ * noise_.imu[1] + integration_noise_[kAngle];
    out.available[kAngle] = true;
  }

  // Velocity: encoder fused with the IMU-propagated previous velocity.
  const bool integrate_velocity = use_imu && prev_has(kVelocity);
  const double integrated_v =
      integrate_velocity ? previous->y[kVelocity] + dt_ * raw.imu_acceleration() : 0.0;
  const double integrated_var =
      integrate_velocity ? previous->variance[kVelocity] + dt_ * dt_ * noise_.imu[0] +
                               integration_noise_[kVelocity]
                         : 0.0;
  if (use_encoder && integrate_velocity) {
    const Fused f = fuse(raw.encoder_velocity(), noise_.encoder[1], integrated_v, integrated_var);
    out.y[kVelocity] = f.value;
    out.variance[kVelocity] = f.variance;
    out.available[kVelocity] = true;
  } else if (use_encoder) {
    out.y[kVelocity] = raw.encoder_velocity();
    out.variance[kVelocity] = noise_.encoder[1];
    out.available[kVelocity] = true;
  } else if (integrate_velocity) {
    out.y[kVelocity] = integrated_v;
    out.variance[kVelocity] = integrated_var;
    out.available[kVelocity] = true;
  } else if (out.available[kPosition] && prev_has(kPosition)) {
    out.y[kVelocity] = (out.y[kPosition] - previous->y[kPosition]) / dt_;
    out.variance[kVelocity] =
        (out.variance[kPosition] + previous->variance[kPosition]) / (dt_ * dt_);
    out.available[kVelocity] = true;
  }

  // Angular velocity: IMU, else difference the camera angle.
  if (use_imu) {
    out.y[kAngularVelocity] = raw.imu_angular_velocity();
    out.variance[kAngularVelocity] = noise_.imu[1];
    out.available[kAngularVelocity] = true;
  } else if (use_camera && prev_has(kAngle)) {
    out.y[kAngularVelocity] = (raw.camera_angle() - previous->y[kAngle]) / dt_;
    out.variance[kAngularVelocity] =
        (noise_.camera[1] + previous->variance[kAngle]) / (dt_ * dt_);
    out.available[kAngularVelocity] = true;
  }

  return out;
}

}  // namespace lasead
