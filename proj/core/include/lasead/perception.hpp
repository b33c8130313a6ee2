#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lasead/sensors.hpp"
#include "lasead/types.hpp"

namespace lasead {

/// Bipartite sensor -> soft-component graph. N(j) is neighbors(j).
class PerceptionGraph {
 public:
  using Edge = std::pair<SensorId, int>;

  PerceptionGraph() = default;
  explicit PerceptionGraph(const std::vector<Edge>& edges);

  /// Encoder -> {position, velocity}, Camera -> {position, angle},
  /// Imu -> {velocity, angular velocity}.
  static PerceptionGraph cart_pole();

  /// Throws std::out_of_range for a component outside 0..3.
  SensorSet neighbors(int component) const;
  bool has_edge(SensorId sensor, int component) const;
  std::vector<Edge> edges() const;

  /// Components that must be compromised when the sensors in `attacked` are
  /// (s_j = max over N(j) of z_i).
  ComponentMask propagate(SensorSet attacked) const;

  /// Every component has at least one incident sensor.
  bool covers_all_components() const;

  std::string to_json() const;
  static PerceptionGraph from_json(std::string_view text);

  bool operator==(const PerceptionGraph&) const = default;

 private:
  std::array<SensorSet, kStateDim> neighbors_{};
};

/// State-shaped output of a perception pipeline together with the
/// per-component noise variance the EKF should assume (diagonal R_S).
struct SoftMeasurement {
  Vec4 y = Vec4::Zero();
  Vec4 variance = Vec4::Zero();
  ComponentMask available;

  int available_count() const { return static_cast<int>(available.count()); }
  std::vector<int> rows() const;
};

/// C_S (selected rows of I4) and R_S restricted to available components.
struct MeasurementModel {
  std::vector<int> rows;
  Eigen::MatrixXd selection;
  Eigen::MatrixXd noise;
};

MeasurementModel pipeline_model(const SoftMeasurement& soft);

/// Min-variance weight on the first of two sources. A pair of zero
/// variances gives the whole weight to the first (direct) source.
double fusion_weight(double first_variance, double second_variance);

/// The pipeline family P_S. Fuses raw readings of the enabled sensors into a
/// soft measurement, falling back to integration or differencing of the
/// previous soft measurement when a component's direct sources are disabled.
class PerceptionPipeline {
 public:
  PerceptionPipeline() = default;
  /// `integration_noise` is the per-step variance the plant adds to each
  /// component beyond what the IMU sees (the process noise diagonal); it is
  /// added whenever a component is propagated from the previous soft value.
  PerceptionPipeline(SensorNoise noise, double dt, Vec4 integration_noise = Vec4::Zero());

  SoftMeasurement process(SensorSet enabled, const RawMeasurementSet& raw,
                          const std::optional<SoftMeasurement>& previous) const;

  /// Components P_S can produce given whether a previous soft measurement
  /// with every component available exists.
  static ComponentMask reachable(SensorSet enabled, bool has_previous);

  const SensorNoise& noise() const { return noise_; }
  double dt() const { return dt_; }
  const Vec4& integration_noise() const { return integration_noise_; }

 private:
  SensorNoise noise_{};
  double dt_ = 0.005;
  Vec4 integration_noise_ = Vec4::Zero();
};

}  // namespace lasead
