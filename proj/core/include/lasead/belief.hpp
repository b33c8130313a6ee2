#pragma once

#include <array>

#include "lasead/detection.hpp"
#include "lasead/perception.hpp"
#include "lasead/types.hpp"

namespace lasead {

inline constexpr double kBeliefClamp = 1e-3;

/// Per-sensor attack probabilities pi_i = P(z_i = 1).
struct Belief {
  std::array<double, kSensorCount> pi{0.05, 0.05, 0.05};

  static Belief uniform(double p) { return Belief{{p, p, p}}; }
  double operator[](SensorId id) const { return pi[index_of(id)]; }
  double& operator[](SensorId id) { return pi[index_of(id)]; }
  /// Clamps every entry into [kBeliefClamp, 1 - kBeliefClamp].
  Belief clamped() const;
  bool operator==(const Belief&) const = default;
};

/// Bayesian network z -> s -> a over the perception graph. Sensors attack
/// independently; s_j is the max of z over N(j); each alert depends only on
/// its own component state and previous alert.
class BnModel {
 public:
  BnModel(PerceptionGraph graph, DetectorCharacterization detector);

  const PerceptionGraph& graph() const { return graph_; }
  const DetectorCharacterization& detector() const { return detector_; }

  /// P(a_j | s_j, a_prev_j). s_j = 0 uses the false-alarm rates eta, s_j = 1
  /// the Beta-marginalized missed-detection rate.
  double component_factor(int component, bool s, bool a, bool a_prev) const;

  /// P(a | z, a_prev).
  double alert_likelihood(SensorSet z, const AlertVector& a, const AlertVector& a_prev) const;

  /// Exact posterior marginals over the 2^3 attack configurations, clamped.
  Belief alert_posterior(const Belief& prior, const AlertVector& a,
                         const AlertVector& a_prev) const;

 private:
  PerceptionGraph graph_;
  DetectorCharacterization detector_;
};

/// Gaussian predictive density of the soft measurement under one hypothesis,
/// restricted to a common set of rows.
struct GaussianPrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

struct ProbingUpdate {
  Belief belief;
  bool skipped = false;
  double log_ratio = 0.0;  // log N(y; h1) - log N(y; h0)
};

/// Likelihood-ratio update of pi_i after a probing input:
///   pi_i <- 1 / (1 + (1 - pi_i) / pi_i * N(y; h1) / N(y; h0)),
/// where h0 is the prediction of the pipeline that uses sensor i and h1 the
/// prediction of the pipeline without it. A covariance that is not positive
/// definite, or mismatched dimensions, leave the belief unchanged and set
/// `skipped`.
ProbingUpdate probing_posterior(const Belief& belief, SensorId sensor, const Eigen::VectorXd& y,
                                const GaussianPrediction& h0, const GaussianPrediction& h1);

/// log N(y; mean, covariance); returns nullopt when the covariance is not PD.
std::optional<double> gaussian_log_density(const Eigen::VectorXd& y,
                                           const GaussianPrediction& prediction);

}  // namespace lasead
