#pragma once

#include <optional>
#include <string_view>

#include "lasead/belief.hpp"
#include "lasead/estimation.hpp"
#include "lasead/plant.hpp"
#include "lasead/types.hpp"

namespace lasead {

/// Riccati iteration failed to converge or produced non-finite values.
class RiccatiDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LqrWeights {
  Vec4 state{1.0, 1.0, 20.0, 2.0};  // diagonal of M_x
  double input = 1.0;               // M_u
};

/// Discrete DARE by fixed-point iteration; returns P. Stops when the
/// relative change drops below `tolerance`.
Mat4 solve_dare(const Mat4& F, const Vec4& G, const Mat4& Q, double R, double tolerance = 1e-10,
                int max_iterations = 2'000'000);

/// Regulator u = -K x around the upright equilibrium, saturated.
class LqrController {
 public:
  LqrController() = default;
  LqrController(Eigen::RowVector4d gain, double u_max);

  static LqrController design(const CartPole& plant, const LqrWeights& weights = {});

  double operator()(const Vec4& x) const;
  const Eigen::RowVector4d& gain() const { return gain_; }
  double u_max() const { return u_max_; }

 private:
  Eigen::RowVector4d gain_ = Eigen::RowVector4d::Zero();
  double u_max_ = 10.0;
};

/// Spectral radius of F - G K.
double closed_loop_spectral_radius(const CartPole& plant, const Eigen::RowVector4d& gain);

struct ThresholdPolicy {
  double probe_low = 0.5;
  double probe_high = 0.59;
  double disable = 0.9;
  double enable = 0.5;
  void validate() const;

  static ThresholdPolicy stochastic_tuned() { return {0.5, 0.59, 0.9, 0.5}; }
  static ThresholdPolicy benign_tuned() { return {0.499, 0.5, 0.9, 0.5}; }
};

struct ProbeDecision {
  bool probe = false;
  SensorId sensor = SensorId::Encoder;
};

/// Probe the sensor with the largest belief inside the open window; ties go
/// to the lower SensorId.
ProbeDecision decide_probing(const Belief& belief, const ThresholdPolicy& policy);

/// Hysteresis trust rule. Never returns an empty set: if every sensor would
/// be disabled, the lowest-belief one stays.
SensorSet decide_trustable(const Belief& belief, const ThresholdPolicy& policy, SensorSet current);

enum class WolfVariant { Imq, Md, Tmd };

std::string_view to_string(WolfVariant v);

/// Observation weight of the outlier-robust update. `residual_norm` is the
/// Euclidean norm (IMQ), `mahalanobis` the Sigma^{-1}-norm (MD, TMD).
double wolf_weight(WolfVariant variant, double residual_norm, double mahalanobis, double c);

struct WolfResult {
  UpdateResult update;
  double weight = 1.0;
};

/// EKF update with R_S inflated by 1/w^2; w = 0 leaves the prediction.
WolfResult wolf_update(const ExtendedKalmanFilter& filter, const EkfEstimate& prediction,
                       const SoftMeasurement& soft, WolfVariant variant, double c);

/// Prediction-only latch of the KalmanPred baseline: engaged by any alert,
/// released once the oracle reports no active attack.
class KalmanPredGate {
 public:
  /// Returns true when the measurement update should be applied.
  bool step(bool alert_any, bool oracle_attack_active);
  bool holding() const { return holding_; }

 private:
  bool holding_ = false;
};

}  // namespace lasead
